//! Seeded synthetic networks and sensor layouts for benchmarks and
//! validation batteries.
//!
//! Networks are geometric: nodes scattered in a unit square, joined by a
//! nearest-neighbor spanning tree plus a few shortcut edges, with trunk
//! pipes widening toward the single inlet. All draws come from one ChaCha
//! stream per seed, so identical specs give identical networks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::network::{NetworkModel, Node, Pipe, SensorLayout};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub nodes: usize,
    /// Extra (loop-forming) edges as a fraction of the node count.
    pub extra_edge_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            nodes: 60,
            extra_edge_fraction: 0.25,
            seed: 0,
        }
    }
}

/// Generates a connected, simple network with one inlet at node 0.
pub fn random_network(spec: &SynthSpec) -> NetworkModel {
    assert!(spec.nodes >= 2, "need at least two nodes");
    let n = spec.nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let positions: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
        .collect();
    let dist = |a: usize, b: usize| -> f64 {
        let (xa, ya) = positions[a];
        let (xb, yb) = positions[b];
        ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt()
    };

    // nearest-neighbor spanning tree grown from the inlet
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut connected = vec![false; n];
    connected[0] = true;
    for i in 1..n {
        let nearest = (0..n)
            .filter(|&j| connected[j])
            .min_by(|&a, &b| dist(i, a).partial_cmp(&dist(i, b)).unwrap())
            .unwrap();
        edges.push((nearest, i));
        connected[i] = true;
    }

    // shortcut edges: shortest non-tree pairs, which keeps the graph planar-ish
    let extra = ((n as f64) * spec.extra_edge_fraction).round() as usize;
    let present: std::collections::HashSet<(usize, usize)> = edges
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    let mut candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .filter(|key| !present.contains(key))
        .collect();
    candidates.sort_by(|&p, &q| {
        dist(p.0, p.1)
            .partial_cmp(&dist(q.0, q.1))
            .unwrap()
            .then(p.cmp(&q))
    });
    edges.extend(candidates.into_iter().take(extra));

    // hop depth from the inlet, for trunk tapering
    let mut adjacency = vec![Vec::new(); n];
    for &(a, b) in &edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut depth = vec![usize::MAX; n];
    depth[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        for &u in &adjacency[v] {
            if depth[u] == usize::MAX {
                depth[u] = depth[v] + 1;
                queue.push_back(u);
            }
        }
    }

    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: format!("n{i}"),
            elevation: 40.0 - 8.0 * dist(0, i) + rng.random_range(-0.3..0.3),
            is_inlet: i == 0,
        })
        .collect();

    let pipes: Vec<Pipe> = edges
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let d = depth[a].min(depth[b]) as f64;
            let diameter = (0.28 * 0.88f64.powf(d) * rng.random_range(0.9..1.1)).clamp(0.10, 0.28);
            Pipe {
                id: format!("p{k}"),
                source: a,
                sink: b,
                length: (dist(a, b) * 600.0).max(80.0),
                diameter,
                roughness: rng.random_range(90.0..140.0),
            }
        })
        .collect();

    NetworkModel::new(nodes, pipes).expect("generated network must validate")
}

/// Benchmark sensor layout: pressure sensors spread by greedy max-min graph
/// distance (the inlet always sensed), AMR demand sensors sampled from the
/// remaining nodes, and flow sensors on every inlet pipe.
pub fn benchmark_layout(
    network: &NetworkModel,
    pressure_fraction: f64,
    amr_fraction: f64,
    seed: u64,
) -> SensorLayout {
    let n = network.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_pressure = ((n as f64 * pressure_fraction).round() as usize).clamp(1, n);
    let hop_dist: Vec<Vec<f64>> = (0..n)
        .map(|v| network.shortest_paths_from(v, crate::network::DistanceUnit::Hops))
        .collect();

    let mut pressure = vec![0usize]; // inlet head is monitored
    while pressure.len() < n_pressure {
        let next = (0..n)
            .filter(|v| !pressure.contains(v))
            .max_by(|&a, &b| {
                let da = pressure
                    .iter()
                    .map(|&s| hop_dist[s][a])
                    .fold(f64::INFINITY, f64::min);
                let db = pressure
                    .iter()
                    .map(|&s| hop_dist[s][b])
                    .fold(f64::INFINITY, f64::min);
                da.partial_cmp(&db).unwrap().then(b.cmp(&a))
            })
            .expect("nodes remain");
        pressure.push(next);
    }
    pressure.sort_unstable();

    let n_amr = ((n as f64 * amr_fraction).round() as usize).min(n.saturating_sub(1));
    let mut amr_pool: Vec<usize> = (1..n).collect();
    let mut amr = Vec::with_capacity(n_amr);
    for _ in 0..n_amr {
        let pick = rng.random_range(0..amr_pool.len());
        amr.push(amr_pool.swap_remove(pick));
    }
    amr.sort_unstable();

    let mut flow: Vec<usize> = network
        .pipes()
        .iter()
        .enumerate()
        .filter(|(_, p)| network.nodes()[p.source].is_inlet || network.nodes()[p.sink].is_inlet)
        .map(|(k, _)| k)
        .collect();
    flow.sort_unstable();

    SensorLayout::new(network, pressure, amr, flow).expect("benchmark layout must validate")
}
