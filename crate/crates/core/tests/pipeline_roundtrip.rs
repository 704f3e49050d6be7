//! End-to-end pipeline exercises over the on-disk formats: save inputs,
//! run batches, reload every artifact, and cross-check the ingest path.

use std::collections::BTreeMap;
use std::path::Path;

use hydrostate::io;
use hydrostate::network::build_structural;
use hydrostate::pipeline::{generate_batch, relocalize_batch, run_batch, EstimatorKind, RunConfig};
use hydrostate::scenario::{DemandRange, LeakScenario, NoiseSpec};
use hydrostate::synth::{benchmark_layout, random_network, SynthSpec};

fn write_inputs(dir: &Path, seed: u64) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
    let network = random_network(&SynthSpec {
        nodes: 24,
        extra_edge_fraction: 0.25,
        seed,
    });
    let layout = benchmark_layout(&network, 0.2, 0.2, seed + 1);
    let network_path = dir.join("network.json");
    let layout_path = dir.join("layout.json");
    let scenarios_path = dir.join("scenarios.json");
    io::save_network(
        &network_path,
        &network,
        &BTreeMap::from([("n0".to_string(), 55.0)]),
    )
    .unwrap();
    io::save_layout(&layout_path, &network, &layout).unwrap();
    let batch = io::ScenarioBatch {
        inlet_heads: BTreeMap::new(),
        demand_range: DemandRange::default(),
        noise: NoiseSpec::default(),
        scenarios: (0..3)
            .map(|i| LeakScenario {
                leak_pipe: 3 + 2 * i,
                leak_rate: 4.0,
                base_demand_seed: 50 + i as u64,
                timestamp_label: format!("s{i:03}"),
            })
            .collect(),
    };
    io::save_scenario_batch(&scenarios_path, &network, &batch).unwrap();
    (network_path, layout_path, scenarios_path)
}

#[test]
fn batch_outputs_and_relocalization() {
    let dir = tempfile::tempdir().unwrap();
    let (network_path, layout_path, scenarios_path) = write_inputs(dir.path(), 31);
    let out_dir = dir.path().join("out");

    let config = RunConfig {
        network_path: network_path.clone(),
        layout_path: layout_path.clone(),
        estimators: vec![EstimatorKind::Gsi, EstimatorKind::Awgsi],
        scenario_batch_path: Some(scenarios_path.clone()),
        output_dir: out_dir.clone(),
        rng_seed: 9,
        parallelism: 1,
        ..RunConfig::default()
    };
    let output = run_batch(&config).unwrap();
    assert_eq!(output.summary.scenarios.len(), 3);
    assert_eq!(output.summary.failed_scenarios, 0);
    assert!(output.summary.rmse_available);
    assert!(output.summary.stats.contains_key("gsi"));
    assert!(output.summary.stats.contains_key("awgsi"));

    // all per-scenario artifacts exist and parse
    for i in 0..3 {
        let sdir = out_dir.join("scenarios").join(format!("s{i:03}"));
        let truth = io::load_state(&sdir.join("truth.json")).unwrap();
        let reference = io::load_state(&sdir.join("reference.json")).unwrap();
        assert_eq!(truth.heads.len(), reference.heads.len());
        for est in ["gsi", "awgsi"] {
            let estimate =
                io::state_file::EstimateFile::load(&sdir.join(format!("estimate_{est}.json")))
                    .unwrap();
            assert_eq!(estimate.heads_m.len(), truth.heads.len());
            let report: hydrostate::localization::LocalizationReport =
                io::read_json(&sdir.join(format!("localization_{est}.json"))).unwrap();
            assert!(report.threshold > 0.0);
        }
    }
    let summary_text = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary_text.contains("gsi"));

    // re-localization at a looser threshold never shrinks candidate sets
    let relocalized = relocalize_batch(
        &network_path,
        &layout_path,
        &scenarios_path,
        &out_dir,
        0.5,
    )
    .unwrap();
    for (est, reports) in &relocalized {
        for (label, loose) in reports {
            let strict = &output.localization[est]
                .iter()
                .find(|(l, _)| l == label)
                .unwrap()
                .1;
            assert!(
                loose.candidate_pipes.len() >= strict.candidate_pipes.len(),
                "{est}/{label}: loosening the threshold shrank the candidate set"
            );
        }
    }
}

#[test]
fn generate_then_ingest_matches_inline_generation() {
    let dir = tempfile::tempdir().unwrap();
    let (network_path, layout_path, scenarios_path) = write_inputs(dir.path(), 77);

    // generation-only pass
    let gen_dir = dir.path().join("generated");
    let (count, failures) =
        generate_batch(&network_path, &layout_path, &scenarios_path, &gen_dir, 5).unwrap();
    assert_eq!(count, 3);
    assert_eq!(failures, 0);

    // the written measurements ingest cleanly and drive the estimators
    let loaded = io::load_network(&network_path).unwrap();
    let layout = io::load_layout(&layout_path, &loaded.model).unwrap();
    let ingest_dir = dir.path().join("ingest");
    std::fs::create_dir_all(&ingest_dir).unwrap();
    for i in 0..3 {
        std::fs::copy(
            gen_dir
                .join("scenarios")
                .join(format!("s{i:03}"))
                .join("measurements.csv"),
            ingest_dir.join(format!("s{i:03}.csv")),
        )
        .unwrap();
    }
    let structural = build_structural(&loaded.model);
    let readings = io::read_measurements(
        &ingest_dir.join("s000.csv"),
        &loaded.model,
        &layout,
    )
    .unwrap();
    assert_eq!(readings.pressure.len(), layout.pressure_nodes().len());
    let _ = structural;

    let config = RunConfig {
        network_path,
        layout_path,
        estimators: vec![EstimatorKind::Gsi],
        measurement_ingest_path: Some(ingest_dir),
        output_dir: dir.path().join("ingest_out"),
        ..RunConfig::default()
    };
    let output = run_batch(&config).unwrap();
    assert_eq!(output.summary.scenarios.len(), 3);
    assert!(!output.summary.rmse_available);
    assert_eq!(output.summary.failed_scenarios, 0);
    // estimates written although no truth is known
    let est = io::state_file::EstimateFile::load(
        &dir.path()
            .join("ingest_out")
            .join("scenarios")
            .join("s000")
            .join("estimate_gsi.json"),
    )
    .unwrap();
    assert_eq!(est.estimator, "gsi");
}
