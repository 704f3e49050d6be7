//! Water-network graph model and the structural matrices derived from it.
//!
//! A network is a simple, connected, undirected graph of junctions and pipes.
//! Node and pipe ordering is the construction (file) order; every matrix and
//! vector in the crate uses that fixed ordering. The stored incidence matrix
//! keeps the construction orientation of each pipe (source +1, sink -1);
//! hydraulic code re-orients rows from head estimates when it needs
//! nonnegative drops.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Hazen-Williams flow exponent: head drop = tau * q^1.852.
pub const HW_EXPONENT: f64 = 1.852;

/// Liters per second in one cubic meter per second.
pub const LITERS_PER_M3: f64 = 1000.0;

/// A junction (or inlet) of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    /// Elevation in meters; used for deterministic orientation tie-breaks.
    pub elevation: f64,
    /// Inlets hold a fixed hydraulic head during steady-state solves.
    pub is_inlet: bool,
}

/// A pipe between two nodes, with the attributes entering the resistance
/// coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipe {
    pub id: String,
    pub source: usize,
    pub sink: usize,
    /// Length in meters.
    pub length: f64,
    /// Diameter in meters.
    pub diameter: f64,
    /// Dimensionless Hazen-Williams roughness coefficient.
    pub roughness: f64,
}

impl Pipe {
    /// Resistance coefficient in SI units (q in m^3/s):
    /// tau = 10.67 * length / (roughness^1.852 * diameter^4.87).
    pub fn resistance_si(&self) -> f64 {
        10.67 * self.length / (self.roughness.powf(HW_EXPONENT) * self.diameter.powf(4.87))
    }

    /// Resistance coefficient for flows in liters/second. The whole crate
    /// works in l/s; the SI value is divided once by 1000^1.852 here.
    pub fn resistance(&self) -> f64 {
        self.resistance_si() / LITERS_PER_M3.powf(HW_EXPONENT)
    }
}

/// Immutable network graph. Safe to share across threads; nothing mutates
/// after construction.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    nodes: Vec<Node>,
    pipes: Vec<Pipe>,
    /// Per node: (neighbor node, pipe index) pairs in pipe order.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl NetworkModel {
    /// Validates and builds a network. Rejects self-loops, parallel edges,
    /// nonpositive pipe attributes, disconnected graphs and inlet-free node
    /// sets.
    pub fn new(nodes: Vec<Node>, pipes: Vec<Pipe>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::validation("network has no nodes"));
        }
        let n = nodes.len();

        let mut node_ids = HashSet::new();
        for node in &nodes {
            if !node.elevation.is_finite() {
                return Err(Error::validation(format!(
                    "node {}: elevation must be finite",
                    node.id
                )));
            }
            if !node_ids.insert(node.id.as_str()) {
                return Err(Error::validation(format!("duplicate node id {}", node.id)));
            }
        }
        if !nodes.iter().any(|v| v.is_inlet) {
            return Err(Error::validation("network needs at least one inlet node"));
        }

        let mut pipe_ids = HashSet::new();
        let mut seen_edges = HashSet::new();
        let mut adjacency = vec![Vec::new(); n];
        for (k, pipe) in pipes.iter().enumerate() {
            if !pipe_ids.insert(pipe.id.as_str()) {
                return Err(Error::validation(format!("duplicate pipe id {}", pipe.id)));
            }
            if pipe.source >= n || pipe.sink >= n {
                return Err(Error::validation(format!(
                    "pipe {}: endpoint index out of range",
                    pipe.id
                )));
            }
            if pipe.source == pipe.sink {
                return Err(Error::structural(format!("pipe {} is a self-loop", pipe.id)));
            }
            let key = (pipe.source.min(pipe.sink), pipe.source.max(pipe.sink));
            if !seen_edges.insert(key) {
                return Err(Error::structural(format!(
                    "parallel edge between nodes {} and {} (pipe {})",
                    key.0, key.1, pipe.id
                )));
            }
            for (attr, value) in [
                ("length", pipe.length),
                ("diameter", pipe.diameter),
                ("roughness", pipe.roughness),
            ] {
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::validation(format!(
                        "pipe {}: {} must be positive, got {}",
                        pipe.id, attr, value
                    )));
                }
            }
            adjacency[pipe.source].push((pipe.sink, k));
            adjacency[pipe.sink].push((pipe.source, k));
        }

        let model = NetworkModel {
            nodes,
            pipes,
            adjacency,
        };
        if !model.is_connected() {
            return Err(Error::structural("network graph is not connected"));
        }
        Ok(model)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn pipe_count(&self) -> usize {
        self.pipes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn pipes(&self) -> &[Pipe] {
        &self.pipes
    }

    /// (neighbor, pipe index) pairs of a node.
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn inlet_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| self.nodes[i].is_inlet)
            .collect()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|v| v.id == id)
    }

    pub fn pipe_index(&self, id: &str) -> Option<usize> {
        self.pipes.iter().position(|e| e.id == id)
    }

    fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(u, _) in &self.adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n
    }

    /// Shortest-path distances from `source` to all nodes under the given
    /// edge weighting.
    pub fn shortest_paths_from(&self, source: usize, unit: DistanceUnit) -> Vec<f64> {
        let n = self.node_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapEntry {
            cost: 0.0,
            node: source,
        });
        while let Some(HeapEntry { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &(next, pipe) in &self.adjacency[node] {
                let w = match unit {
                    DistanceUnit::Hops => 1.0,
                    DistanceUnit::Meters => self.pipes[pipe].length,
                };
                let next_cost = cost + w;
                if next_cost < dist[next] {
                    dist[next] = next_cost;
                    heap.push(HeapEntry {
                        cost: next_cost,
                        node: next,
                    });
                }
            }
        }
        dist
    }

    /// Hop count of the shortest path between two nodes.
    pub fn shortest_path_hops(&self, u: usize, v: usize) -> usize {
        self.shortest_paths_from(u, DistanceUnit::Hops)[v] as usize
    }

    /// Length in meters of the shortest path between two nodes.
    pub fn shortest_path_meters(&self, u: usize, v: usize) -> f64 {
        self.shortest_paths_from(u, DistanceUnit::Meters)[v]
    }
}

/// Edge weighting for shortest-path queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceUnit {
    Hops,
    Meters,
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dense matrices derived from the graph: incidence, resistance diagonal,
/// length-based adjacency, degree and Laplacian.
#[derive(Debug, Clone)]
pub struct StructuralMatrices {
    /// m x n signed incidence in construction orientation (+1 source, -1 sink).
    pub incidence: DMatrix<f64>,
    /// Diagonal of the resistance matrix T for flows in l/s.
    pub resistance: DVector<f64>,
    /// Diagonal of T in SI units (flows in m^3/s), kept for reporting.
    pub resistance_si: DVector<f64>,
    /// n x n symmetric adjacency with w_ij = 1/length on edges.
    pub gsi_adjacency: DMatrix<f64>,
    /// Diagonal of the degree matrix D, d_i = sum_j w_ij.
    pub degree: DVector<f64>,
    /// Graph Laplacian L = D - W.
    pub laplacian: DMatrix<f64>,
}

/// Builds all structural matrices of a validated network.
pub fn build_structural(network: &NetworkModel) -> StructuralMatrices {
    let n = network.node_count();
    let m = network.pipe_count();

    let mut incidence = DMatrix::zeros(m, n);
    let mut resistance = DVector::zeros(m);
    let mut resistance_si = DVector::zeros(m);
    let mut gsi_adjacency = DMatrix::zeros(n, n);

    for (k, pipe) in network.pipes().iter().enumerate() {
        incidence[(k, pipe.source)] = 1.0;
        incidence[(k, pipe.sink)] = -1.0;
        resistance[k] = pipe.resistance();
        resistance_si[k] = pipe.resistance_si();
        let w = 1.0 / pipe.length;
        gsi_adjacency[(pipe.source, pipe.sink)] = w;
        gsi_adjacency[(pipe.sink, pipe.source)] = w;
    }

    let degree = DVector::from_fn(n, |i, _| gsi_adjacency.row(i).sum());
    let mut laplacian = -&gsi_adjacency;
    for i in 0..n {
        laplacian[(i, i)] += degree[i];
    }

    StructuralMatrices {
        incidence,
        resistance,
        resistance_si,
        gsi_adjacency,
        degree,
        laplacian,
    }
}

/// Builds the row-selection matrix for an index set: one standard basis row
/// per index, in the given order.
pub fn selection_matrix(indices: &[usize], dimension: usize) -> Result<DMatrix<f64>> {
    let mut s = DMatrix::zeros(indices.len(), dimension);
    for (row, &idx) in indices.iter().enumerate() {
        if idx >= dimension {
            return Err(Error::validation(format!(
                "selection index {idx} out of range for dimension {dimension}"
            )));
        }
        s[(row, idx)] = 1.0;
    }
    Ok(s)
}

/// Index sets of the installed instruments. Pressure and demand sensors are
/// independent and may share nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorLayout {
    pressure_nodes: Vec<usize>,
    amr_nodes: Vec<usize>,
    flow_pipes: Vec<usize>,
}

impl SensorLayout {
    pub fn new(
        network: &NetworkModel,
        pressure_nodes: Vec<usize>,
        amr_nodes: Vec<usize>,
        flow_pipes: Vec<usize>,
    ) -> Result<Self> {
        let check = |name: &str, set: &[usize], dim: usize| -> Result<()> {
            let mut seen = HashSet::new();
            for &i in set {
                if i >= dim {
                    return Err(Error::validation(format!(
                        "{name} index {i} out of range (dimension {dim})"
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::validation(format!("{name} index {i} listed twice")));
                }
            }
            Ok(())
        };
        check("pressure sensor", &pressure_nodes, network.node_count())?;
        check("AMR sensor", &amr_nodes, network.node_count())?;
        check("flow sensor", &flow_pipes, network.pipe_count())?;
        Ok(SensorLayout {
            pressure_nodes,
            amr_nodes,
            flow_pipes,
        })
    }

    pub fn pressure_nodes(&self) -> &[usize] {
        &self.pressure_nodes
    }

    pub fn amr_nodes(&self) -> &[usize] {
        &self.amr_nodes
    }

    pub fn flow_pipes(&self) -> &[usize] {
        &self.flow_pipes
    }

    /// n_s x n selection matrix extracting sensed heads.
    pub fn pressure_selection(&self, n: usize) -> DMatrix<f64> {
        selection_matrix(&self.pressure_nodes, n).expect("validated on construction")
    }

    /// n_q x m selection matrix extracting sensed flows.
    pub fn flow_selection(&self, m: usize) -> DMatrix<f64> {
        selection_matrix(&self.flow_pipes, m).expect("validated on construction")
    }
}

/// Resolves a list of element ids against the network, preserving order.
pub fn resolve_node_ids(network: &NetworkModel, ids: &[String]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| {
            network
                .node_index(id)
                .ok_or_else(|| Error::validation(format!("unknown node id {id}")))
        })
        .collect()
}

pub fn resolve_pipe_ids(network: &NetworkModel, ids: &[String]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| {
            network
                .pipe_index(id)
                .ok_or_else(|| Error::validation(format!("unknown pipe id {id}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{line_network, triangle_network};

    // tau(length 100, diameter 0.3, roughness 130) evaluated with a
    // high-precision external calculator, 12+ significant digits.
    const TAU_FIXTURE: f64 = 45.6626193621101;

    #[test]
    fn resistance_matches_fixture() {
        let pipe = Pipe {
            id: "p".into(),
            source: 0,
            sink: 1,
            length: 100.0,
            diameter: 0.3,
            roughness: 130.0,
        };
        assert!((pipe.resistance_si() - TAU_FIXTURE).abs() < 1e-9 * TAU_FIXTURE);
        let conv = LITERS_PER_M3.powf(HW_EXPONENT);
        assert!((pipe.resistance() * conv - pipe.resistance_si()).abs() < 1e-12);
    }

    #[test]
    fn single_edge_structural() {
        let nw = line_network(&[1000.0]);
        let s = build_structural(&nw);
        assert_eq!(s.incidence.nrows(), 1);
        assert_eq!(s.incidence[(0, 0)], 1.0);
        assert_eq!(s.incidence[(0, 1)], -1.0);
        assert!((s.gsi_adjacency[(0, 1)] - 1e-3).abs() < 1e-18);
        assert!((s.degree[0] - 1e-3).abs() < 1e-18);
        assert!((s.laplacian[(0, 0)] - 1e-3).abs() < 1e-18);
        assert!((s.laplacian[(0, 1)] + 1e-3).abs() < 1e-18);
    }

    #[test]
    fn incidence_rows_sum_to_zero() {
        let nw = triangle_network();
        let s = build_structural(&nw);
        for k in 0..nw.pipe_count() {
            assert_eq!(s.incidence.row(k).sum(), 0.0);
        }
    }

    #[test]
    fn laplacian_factorization_cross_check() {
        // L = B^T diag(w) B with w_k = 1/length_k.
        let nw = triangle_network();
        let s = build_structural(&nw);
        let w = DVector::from_fn(nw.pipe_count(), |k, _| 1.0 / nw.pipes()[k].length);
        let rebuilt = s.incidence.transpose() * DMatrix::from_diagonal(&w) * &s.incidence;
        assert!((rebuilt - &s.laplacian).abs().max() < 1e-12);
    }

    #[test]
    fn triangle_laplacian_spectrum() {
        let nw = triangle_network();
        let s = build_structural(&nw);
        for i in 0..3 {
            assert!(s.laplacian.row(i).sum().abs() < 1e-15);
        }
        let mut eig: Vec<f64> = s
            .laplacian
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(eig[0].abs() < 1e-12);
        assert!(eig[1] > 0.0 && eig[2] > 0.0);
    }

    #[test]
    fn selection_matrix_cases() {
        let s = selection_matrix(&[1], 3).unwrap();
        assert_eq!(s.nrows(), 1);
        assert_eq!(s.row(0).iter().copied().collect::<Vec<_>>(), [0.0, 1.0, 0.0]);

        let empty = selection_matrix(&[], 3).unwrap();
        assert_eq!(empty.nrows(), 0);
        assert_eq!(empty.ncols(), 3);

        let two = selection_matrix(&[0, 2], 3).unwrap();
        assert_eq!(two[(0, 0)], 1.0);
        assert_eq!(two[(1, 2)], 1.0);
        assert_eq!(two.sum(), 2.0);

        assert!(selection_matrix(&[3], 3).is_err());
    }

    #[test]
    fn shortest_paths_on_line() {
        let nw = line_network(&[100.0, 100.0]);
        assert_eq!(nw.shortest_path_hops(0, 0), 0);
        assert_eq!(nw.shortest_path_hops(0, 2), 2);
        assert!((nw.shortest_path_meters(0, 2) - 200.0).abs() < 1e-12);
    }

    #[test]
    fn shortest_paths_match_enumeration_oracle() {
        // Exhaustive simple-path enumeration on a fixed 5-node graph.
        let nodes: Vec<Node> = (0..5)
            .map(|i| Node {
                id: format!("n{i}"),
                elevation: 0.0,
                is_inlet: i == 0,
            })
            .collect();
        let edges = [(0, 1, 50.0), (1, 2, 80.0), (0, 3, 60.0), (3, 2, 40.0), (3, 4, 120.0)];
        let pipes: Vec<Pipe> = edges
            .iter()
            .enumerate()
            .map(|(k, &(a, b, len))| Pipe {
                id: format!("p{k}"),
                source: a,
                sink: b,
                length: len,
                diameter: 0.2,
                roughness: 100.0,
            })
            .collect();
        let nw = NetworkModel::new(nodes, pipes).unwrap();

        fn enumerate(
            nw: &NetworkModel,
            at: usize,
            goal: usize,
            seen: &mut Vec<bool>,
            cost: f64,
            best: &mut f64,
            metric: DistanceUnit,
        ) {
            if at == goal {
                *best = best.min(cost);
                return;
            }
            for &(next, pipe) in nw.neighbors(at) {
                if !seen[next] {
                    seen[next] = true;
                    let w = match metric {
                        DistanceUnit::Hops => 1.0,
                        DistanceUnit::Meters => nw.pipes()[pipe].length,
                    };
                    enumerate(nw, next, goal, seen, cost + w, best, metric);
                    seen[next] = false;
                }
            }
        }

        for u in 0..5 {
            for v in 0..5 {
                for metric in [DistanceUnit::Hops, DistanceUnit::Meters] {
                    let mut seen = vec![false; 5];
                    seen[u] = true;
                    let mut best = f64::INFINITY;
                    enumerate(&nw, u, v, &mut seen, 0.0, &mut best, metric);
                    let got = nw.shortest_paths_from(u, metric)[v];
                    assert!(
                        (got - best).abs() < 1e-12,
                        "pair ({u},{v}) {metric:?}: dijkstra {got} vs oracle {best}"
                    );
                }
            }
        }
    }

    #[test]
    fn metric_axioms_hold_exhaustively() {
        let nw = triangle_network();
        let n = nw.node_count();
        for unit in [DistanceUnit::Hops, DistanceUnit::Meters] {
            let all: Vec<Vec<f64>> = (0..n).map(|u| nw.shortest_paths_from(u, unit)).collect();
            for u in 0..n {
                assert_eq!(all[u][u], 0.0);
                for v in 0..n {
                    assert!((all[u][v] - all[v][u]).abs() < 1e-12);
                    assert!(u == v || all[u][v] > 0.0);
                    for w in 0..n {
                        assert!(all[u][w] <= all[u][v] + all[v][w] + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_networks() {
        let mk_nodes = |n: usize| -> Vec<Node> {
            (0..n)
                .map(|i| Node {
                    id: format!("n{i}"),
                    elevation: 0.0,
                    is_inlet: i == 0,
                })
                .collect()
        };
        let pipe = |id: &str, a: usize, b: usize| Pipe {
            id: id.into(),
            source: a,
            sink: b,
            length: 10.0,
            diameter: 0.1,
            roughness: 100.0,
        };

        // self loop
        assert!(matches!(
            NetworkModel::new(mk_nodes(2), vec![pipe("p0", 1, 1)]),
            Err(Error::Structural(_))
        ));
        // parallel edge (either direction)
        assert!(matches!(
            NetworkModel::new(mk_nodes(2), vec![pipe("p0", 0, 1), pipe("p1", 1, 0)]),
            Err(Error::Structural(_))
        ));
        // disconnected
        assert!(matches!(
            NetworkModel::new(mk_nodes(4), vec![pipe("p0", 0, 1), pipe("p1", 2, 3)]),
            Err(Error::Structural(_))
        ));
        // nonpositive attribute
        let mut bad = pipe("p0", 0, 1);
        bad.diameter = 0.0;
        assert!(matches!(
            NetworkModel::new(mk_nodes(2), vec![bad]),
            Err(Error::Validation(_))
        ));
        // no inlet
        let mut nodes = mk_nodes(2);
        nodes[0].is_inlet = false;
        assert!(matches!(
            NetworkModel::new(nodes, vec![pipe("p0", 0, 1)]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn layout_validation() {
        let nw = triangle_network();
        assert!(SensorLayout::new(&nw, vec![0, 1], vec![1], vec![0]).is_ok());
        // overlap between pressure and AMR sets is allowed
        assert!(SensorLayout::new(&nw, vec![0], vec![0], vec![]).is_ok());
        assert!(SensorLayout::new(&nw, vec![0, 0], vec![], vec![]).is_err());
        assert!(SensorLayout::new(&nw, vec![9], vec![], vec![]).is_err());
        assert!(SensorLayout::new(&nw, vec![], vec![], vec![7]).is_err());
    }
}
