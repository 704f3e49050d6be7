use hydrostate::filters::{dual_ukf_run, EstimatorConfig};
use hydrostate::hydraulics::{estimate_incidence, hazen_williams_flow};
use hydrostate::interpolation::{awgsi_interpolate, awgsi_weights, build_prediction_matrix, gsi_interpolate};
use hydrostate::hydraulics::elevation_incidence;
use hydrostate::network::build_structural;
use hydrostate::pipeline::rmse;
use hydrostate::scenario::{generate_scenario, DemandRange, LeakScenario, NoiseSpec};
use hydrostate::synth::{benchmark_layout, random_network, SynthSpec};

#[test]
#[ignore]
fn dual_diag() {
    let network = random_network(&SynthSpec { nodes: 50, extra_edge_fraction: 0.25, seed: 100 });
    let structural = build_structural(&network);
    let layout = benchmark_layout(&network, 0.15, 0.15, 200);
    let inlets = vec![(0usize, 60.0)];
    let scenario = LeakScenario {
        leak_pipe: 21,
        leak_rate: 5.0,
        base_demand_seed: 1001,
        timestamp_label: "s001".into(),
    };
    let data = generate_scenario(&network, &structural, &layout, &inlets, &scenario, &DemandRange::default(), &NoiseSpec::default()).unwrap();

    let config = EstimatorConfig {
        r_q: 4.0,
        r_h_virtual: 100.0,
        ..EstimatorConfig::default()
    };
    let b_elev = elevation_incidence(&network);
    let gsi_heads = gsi_interpolate(&structural, &layout, &data.readings.pressure, 100.0, &b_elev).unwrap();
    let weights = awgsi_weights(&network, &structural, &gsi_heads).unwrap();
    let b_prior = estimate_incidence(&gsi_heads, &network);
    let aw_heads = awgsi_interpolate(&layout, &data.readings.pressure, &weights, 100.0, &b_prior).unwrap();
    println!("AWGSI head rmse: {:.4} cm", rmse(&data.truth.heads, &aw_heads) * 100.0);

    let eps = config.effective_epsilon(&layout, network.node_count());
    println!("epsilon = {eps}");
    let prediction = build_prediction_matrix(&weights, eps).unwrap();
    // non-dual for comparison
    let nd = hydrostate::filters::ukf_awgsi_run(&network, &structural, &layout, &prediction, &config, &data.readings, &aw_heads).unwrap();
    let nd_oriented = estimate_incidence(&nd.heads, &network);
    let nd_flows = hazen_williams_flow(&nd.heads, &nd_oriented, &structural.resistance).unwrap();
    println!("ukf head rmse: {:.4} cm  flow rmse {:.4} l/s (converged={} iters={})",
        rmse(&data.truth.heads, &nd.heads) * 100.0, rmse(&data.truth.flows, &nd_flows),
        nd.diagnostics.converged, nd.diagnostics.iterations);
    let aw_oriented = estimate_incidence(&aw_heads, &network);
    let aw_flows = hazen_williams_flow(&aw_heads, &aw_oriented, &structural.resistance).unwrap();
    println!("awgsi flow rmse: {:.4} l/s", rmse(&data.truth.flows, &aw_flows));
    let run = dual_ukf_run(&network, &structural, &layout, &prediction, &config, &data.readings, &aw_heads).unwrap();
    println!("dual head rmse: {:.4} cm", rmse(&data.truth.heads, &run.heads) * 100.0);
    println!("dual flow rmse: {:.4} l/s", rmse(&data.truth.flows, run.flows.as_ref().unwrap()));
    println!("converged={} iters={} repairs={}", run.diagnostics.converged, run.diagnostics.iterations, run.diagnostics.covariance_repairs);
    for row in run.diagnostics.rows.iter().take(12) {
        println!("it {:3}: dh={:9.3e} dq={:9.3e} innov_h={:9.3e} innov_q={:9.3e} trPh={:9.3e} trPq={:9.3e}",
            row.iteration, row.head_delta, row.flow_delta, row.head_innovation, row.flow_innovation, row.head_cov_trace, row.flow_cov_trace);
    }
    println!("...");
    for row in run.diagnostics.rows.iter().rev().take(8).collect::<Vec<_>>().iter().rev() {
        println!("it {:3}: dh={:9.3e} dq={:9.3e} innov_h={:9.3e} innov_q={:9.3e} trPh={:9.3e} trPq={:9.3e}",
            row.iteration, row.head_delta, row.flow_delta, row.head_innovation, row.flow_innovation, row.head_cov_trace, row.flow_cov_trace);
    }
}
