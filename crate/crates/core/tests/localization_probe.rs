use hydrostate::filters::EstimatorConfig;
use hydrostate::localization::node_likelihood;
use hydrostate::network::build_structural;
use hydrostate::pipeline::{estimate_scenario, EstimatorKind};
use hydrostate::scenario::{generate_scenario, DemandRange, LeakScenario, NoiseSpec};
use hydrostate::synth::{benchmark_layout, random_network, SynthSpec};

#[test]
#[ignore]
fn localization_probe() {
    let config = EstimatorConfig::default();
    let mut hits = 0usize;
    let mut total = 0usize;
    let mut scenario_idx = 0u64;
    for (net_idx, nodes) in [50usize, 75, 100, 125, 150].iter().enumerate() {
        let network = random_network(&SynthSpec {
            nodes: *nodes,
            extra_edge_fraction: 0.25,
            seed: 100 + net_idx as u64,
        });
        let structural = build_structural(&network);
        let layout = benchmark_layout(&network, 0.15, 0.15, 200 + net_idx as u64);
        let inlets = vec![(0usize, 60.0)];
        for s in 0..4 {
            scenario_idx += 1;
            let leak_pipe = (7 * (s + 3) + net_idx * 11) % network.pipe_count();
            let scenario = LeakScenario {
                leak_pipe,
                leak_rate: 5.0,
                base_demand_seed: 1000 + scenario_idx,
                timestamp_label: format!("s{scenario_idx:03}"),
            };
            let data = generate_scenario(
                &network, &structural, &layout, &inlets, &scenario,
                &DemandRange::default(), &NoiseSpec::default(),
            ).unwrap();
            let reference = generate_scenario(
                &network, &structural, &layout, &inlets,
                &LeakScenario { leak_rate: 0.0, ..scenario.clone() },
                &DemandRange::default(), &NoiseSpec::default(),
            ).unwrap();
            let est = estimate_scenario(
                &network, &structural, &layout, EstimatorKind::DualUkfAwgsi,
                &config, 100.0, &data.readings,
            ).unwrap();
            let likelihood = node_likelihood(&reference.truth.heads, &est.heads, "r", "l").unwrap();
            // argmax node, deterministic tie-break by index
            let mut best = 0usize;
            for i in 1..likelihood.values.len() {
                if likelihood.values[i] > likelihood.values[best] {
                    best = i;
                }
            }
            let pipe = &network.pipes()[scenario.leak_pipe];
            let hop_a = network.shortest_path_hops(best, pipe.source);
            let hop_b = network.shortest_path_hops(best, pipe.sink);
            let dist = hop_a.min(hop_b);
            total += 1;
            if dist <= 2 {
                hits += 1;
            }
            println!(
                "net {net_idx} scenario {s}: top node {best}, leak pipe ({},{}), hops {dist} {}",
                pipe.source, pipe.sink, if dist <= 2 { "HIT" } else { "miss" }
            );
        }
    }
    println!("\nhit rate: {hits}/{total}");
}
