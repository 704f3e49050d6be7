//! End-to-end batch orchestration: load inputs, synthesize or ingest
//! measurements, run the selected estimators, score leak localization and
//! write machine- and human-readable reports.
//!
//! Outputs are a pure function of (inputs, seed, config): all randomness
//! derives from explicit seeds, scenarios are processed independently and
//! results are written sorted by a single writer, so re-running a batch at
//! any parallelism level reproduces byte-identical files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{
    dual_ukf_run, ukf_awgsi_run, EstimatorConfig, SensorReadings,
};
use crate::hydraulics::{
    elevation_incidence, estimate_incidence, hazen_williams_flow, HydraulicState, InletHeads,
};
use crate::interpolation::{
    awgsi_interpolate, awgsi_weights, build_prediction_matrix, gsi_interpolate, DEFAULT_ZETA,
};
use crate::io;
use crate::localization::{
    candidate_set, kpi_report, node_likelihood, pipe_metric, LocalizationReport,
    DEFAULT_CANDIDATE_THRESHOLD,
};
use crate::network::{build_structural, NetworkModel, SensorLayout, StructuralMatrices};
use crate::scenario::{generate_scenario, LeakScenario, NoiseSpec};

/// The four estimators the pipeline can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Gsi,
    Awgsi,
    UkfAwgsi,
    DualUkfAwgsi,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Gsi => "gsi",
            EstimatorKind::Awgsi => "awgsi",
            EstimatorKind::UkfAwgsi => "ukf-awgsi",
            EstimatorKind::DualUkfAwgsi => "dual-ukf-awgsi",
        }
    }

    pub fn all() -> [EstimatorKind; 4] {
        [
            EstimatorKind::Gsi,
            EstimatorKind::Awgsi,
            EstimatorKind::UkfAwgsi,
            EstimatorKind::DualUkfAwgsi,
        ]
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gsi" => Ok(EstimatorKind::Gsi),
            "awgsi" => Ok(EstimatorKind::Awgsi),
            "ukf-awgsi" => Ok(EstimatorKind::UkfAwgsi),
            "dual-ukf-awgsi" => Ok(EstimatorKind::DualUkfAwgsi),
            other => Err(Error::validation(format!(
                "unknown estimator {other:?} (expected gsi, awgsi, ukf-awgsi or dual-ukf-awgsi)"
            ))),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Batch run configuration. Exactly one of `scenario_batch_path` /
/// `measurement_ingest_path` must be set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network_path: PathBuf,
    pub layout_path: PathBuf,
    pub estimators: Vec<EstimatorKind>,
    pub estimator_config: EstimatorConfig,
    /// Objective weight of the interpolation slack term.
    pub zeta: f64,
    /// Candidate-selection threshold for localization.
    pub candidate_threshold: f64,
    pub scenario_batch_path: Option<PathBuf>,
    pub measurement_ingest_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub rng_seed: u64,
    /// Worker count; zero picks the machine default.
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            network_path: PathBuf::new(),
            layout_path: PathBuf::new(),
            estimators: vec![EstimatorKind::DualUkfAwgsi],
            estimator_config: EstimatorConfig::default(),
            zeta: DEFAULT_ZETA,
            candidate_threshold: DEFAULT_CANDIDATE_THRESHOLD,
            scenario_batch_path: None,
            measurement_ingest_path: None,
            output_dir: PathBuf::from("out"),
            rng_seed: 0,
            parallelism: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.scenario_batch_path, &self.measurement_ingest_path) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return Err(Error::validation(
                    "exactly one of scenario_batch_path / measurement_ingest_path must be set",
                ))
            }
        }
        if self.estimators.is_empty() {
            return Err(Error::validation("at least one estimator must be selected"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.estimators {
            if !seen.insert(*e) {
                return Err(Error::validation(format!("estimator {e} listed twice")));
            }
        }
        self.estimator_config.validate()?;
        if !(self.zeta > 0.0) {
            return Err(Error::validation("zeta must be positive"));
        }
        if !(0.0..=1.0).contains(&self.candidate_threshold) {
            return Err(Error::validation("candidate threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Root-mean-square error between two equally sized vectors.
pub fn rmse(truth: &DVector<f64>, estimate: &DVector<f64>) -> f64 {
    assert_eq!(truth.len(), estimate.len(), "rmse over mismatched vectors");
    let n = truth.len() as f64;
    ((truth - estimate).norm_squared() / n).sqrt()
}

/// One estimator's output for one scenario.
#[derive(Debug, Clone)]
pub struct EstimateOutcome {
    pub heads: DVector<f64>,
    pub flows: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Runs one estimator on one scenario's readings. Flows come from the flow
/// filter for the dual estimator and from the flow law otherwise.
pub fn estimate_scenario(
    network: &NetworkModel,
    structural: &StructuralMatrices,
    layout: &SensorLayout,
    kind: EstimatorKind,
    config: &EstimatorConfig,
    zeta: f64,
    readings: &SensorReadings,
) -> Result<EstimateOutcome> {
    let flows_from = |heads: &DVector<f64>| -> Result<DVector<f64>> {
        let oriented = estimate_incidence(heads, network);
        hazen_williams_flow(heads, &oriented, &structural.resistance)
    };

    // plain interpolation, the common starting point
    let b_elev = elevation_incidence(network);
    let gsi_heads = gsi_interpolate(structural, layout, &readings.pressure, zeta, &b_elev)?;
    if kind == EstimatorKind::Gsi {
        let flows = flows_from(&gsi_heads)?;
        return Ok(EstimateOutcome {
            heads: gsi_heads,
            flows,
            converged: true,
            iterations: 0,
        });
    }

    // analytical reweighting around the plain solution
    let weights = awgsi_weights(network, structural, &gsi_heads)?;
    let b_prior = estimate_incidence(&gsi_heads, network);
    let aw_heads = awgsi_interpolate(layout, &readings.pressure, &weights, zeta, &b_prior)?;
    if kind == EstimatorKind::Awgsi {
        let flows = flows_from(&aw_heads)?;
        return Ok(EstimateOutcome {
            heads: aw_heads,
            flows,
            converged: true,
            iterations: 0,
        });
    }

    // filter stage, initialized from the reweighted interpolation
    let epsilon = config.effective_epsilon(layout, network.node_count());
    let prediction = build_prediction_matrix(&weights, epsilon)?;
    let run = match kind {
        EstimatorKind::UkfAwgsi => {
            ukf_awgsi_run(network, structural, layout, &prediction, config, readings, &aw_heads)?
        }
        EstimatorKind::DualUkfAwgsi => {
            dual_ukf_run(network, structural, layout, &prediction, config, readings, &aw_heads)?
        }
        _ => unreachable!("interpolation estimators returned above"),
    };
    let flows = match &run.flows {
        Some(flows) => flows.clone(),
        None => flows_from(&run.heads)?,
    };
    Ok(EstimateOutcome {
        heads: run.heads,
        flows,
        converged: run.diagnostics.converged,
        iterations: run.diagnostics.iterations,
    })
}

/// Per-scenario summary row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub label: String,
    /// Head RMSE in centimeters, per estimator.
    pub head_rmse_cm: BTreeMap<String, f64>,
    /// Flow RMSE in liters/second, per estimator.
    pub flow_rmse_lps: BTreeMap<String, f64>,
    /// Estimator failures, by estimator name.
    pub errors: BTreeMap<String, String>,
    /// Scenario-level failure (oracle solve, measurement ingest).
    pub scenario_error: Option<String>,
}

/// Mean and population standard deviation of the per-scenario RMSE values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub head_mean_cm: f64,
    pub head_std_cm: f64,
    pub flow_mean_lps: f64,
    pub flow_std_lps: f64,
    pub scenarios_used: usize,
}

/// Machine-readable batch summary (also rendered as a text table).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSummary {
    pub format: String,
    pub version: u32,
    pub rng_seed: u64,
    pub estimators: Vec<String>,
    /// False in ingest mode, where no ground truth exists.
    pub rmse_available: bool,
    pub scenarios: Vec<ScenarioRow>,
    pub stats: BTreeMap<String, EstimatorStats>,
    pub failed_scenarios: usize,
}

pub const SUMMARY_FORMAT: &str = "hydrostate-summary";
pub const SUMMARY_VERSION: u32 = 1;

/// Everything a batch produces in memory; files are written under the
/// configured output directory.
#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub summary: BatchSummary,
    /// Localization reports per estimator, in scenario order.
    pub localization: BTreeMap<String, Vec<(String, LocalizationReport)>>,
}

struct ProcessedScenario {
    index: usize,
    label: String,
    truth: Option<HydraulicState>,
    reference: Option<HydraulicState>,
    readings: Option<SensorReadings>,
    estimates: BTreeMap<String, EstimateOutcome>,
    localization: BTreeMap<String, LocalizationReport>,
    row: ScenarioRow,
}

/// Runs a whole batch: synthesizes (or ingests) every scenario, runs each
/// selected estimator, scores localization against the leak-free oracle
/// reference, and writes all outputs atomically.
pub fn run_batch(config: &RunConfig) -> Result<BatchOutput> {
    config.validate()?;
    let loaded = io::load_network(&config.network_path)?;
    let network = loaded.model;
    let structural = build_structural(&network);
    let layout = io::load_layout(&config.layout_path, &network)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::validation(format!("thread pool: {e}")))?;

    let processed: Vec<ProcessedScenario> = if let Some(batch_path) =
        &config.scenario_batch_path
    {
        let batch = io::load_scenario_batch(batch_path, &network)?;
        let inlet_heads = resolve_inlet_heads(&network, &loaded.inlet_heads, &batch.inlet_heads)?;
        let scenarios = batch.scenarios.clone();
        pool.install(|| {
            scenarios
                .par_iter()
                .enumerate()
                .map(|(index, scenario)| {
                    process_generated(
                        index, scenario, &network, &structural, &layout, &inlet_heads, &batch,
                        config,
                    )
                })
                .collect()
        })
    } else {
        let ingest_dir = config.measurement_ingest_path.as_ref().unwrap();
        let files = ingest_files(ingest_dir)?;
        pool.install(|| {
            files
                .par_iter()
                .enumerate()
                .map(|(index, path)| {
                    process_ingested(index, path, &network, &structural, &layout, config)
                })
                .collect()
        })
    };

    let mut processed = processed;
    processed.sort_by_key(|p| p.index);

    // single-writer output pass
    let scenario_dir = config.output_dir.join("scenarios");
    let mut localization: BTreeMap<String, Vec<(String, LocalizationReport)>> = BTreeMap::new();
    for p in &processed {
        let dir = scenario_dir.join(&p.label);
        if let Some(truth) = &p.truth {
            io::save_state(&dir.join("truth.json"), truth)?;
        }
        if let Some(reference) = &p.reference {
            io::save_state(&dir.join("reference.json"), reference)?;
        }
        if let Some(readings) = &p.readings {
            io::write_measurements(&dir.join("measurements.csv"), &network, &layout, readings)?;
        }
        for (name, estimate) in &p.estimates {
            io::state_file::EstimateFile::new(
                name.clone(),
                &estimate.heads,
                &estimate.flows,
                estimate.converged,
                estimate.iterations,
            )
            .save(&dir.join(format!("estimate_{name}.json")))?;
        }
        for (name, report) in &p.localization {
            io::write_json(&dir.join(format!("localization_{name}.json")), report)?;
            localization
                .entry(name.clone())
                .or_default()
                .push((p.label.clone(), report.clone()));
        }
    }

    let rmse_available = config.scenario_batch_path.is_some();
    let estimator_names: Vec<String> =
        config.estimators.iter().map(|e| e.name().to_string()).collect();
    let rows: Vec<ScenarioRow> = processed.iter().map(|p| p.row.clone()).collect();
    let stats = summarize(&estimator_names, &rows);
    let failed_scenarios = rows
        .iter()
        .filter(|r| r.scenario_error.is_some() || !r.errors.is_empty())
        .count();
    let summary = BatchSummary {
        format: SUMMARY_FORMAT.into(),
        version: SUMMARY_VERSION,
        rng_seed: config.rng_seed,
        estimators: estimator_names,
        rmse_available,
        scenarios: rows,
        stats,
        failed_scenarios,
    };

    io::write_json(&config.output_dir.join("summary.json"), &summary)?;
    io::atomic_write(
        &config.output_dir.join("summary.txt"),
        io::report::render_summary_table(&summary).as_bytes(),
    )?;
    for (name, reports) in &localization {
        io::atomic_write(
            &config.output_dir.join(format!("localization_{name}.txt")),
            io::report::render_localization_table(name, reports).as_bytes(),
        )?;
    }

    Ok(BatchOutput {
        summary,
        localization,
    })
}

/// Merges inlet heads from the network file and the scenario batch (batch
/// wins), checking completeness against the model's inlet set.
fn resolve_inlet_heads(
    network: &NetworkModel,
    from_file: &BTreeMap<String, f64>,
    from_batch: &BTreeMap<String, f64>,
) -> Result<InletHeads> {
    let mut merged = from_file.clone();
    for (id, &head) in from_batch {
        merged.insert(id.clone(), head);
    }
    let mut result = Vec::new();
    for (id, &head) in &merged {
        let idx = network
            .node_index(id)
            .ok_or_else(|| Error::validation(format!("inlet head for unknown node {id}")))?;
        if !network.nodes()[idx].is_inlet {
            return Err(Error::validation(format!(
                "node {id} has a fixed head but is not an inlet"
            )));
        }
        result.push((idx, head));
    }
    for inlet in network.inlet_nodes() {
        if !result.iter().any(|&(i, _)| i == inlet) {
            return Err(Error::validation(format!(
                "inlet {} has no fixed head (set it in the network transform or the scenario batch)",
                network.nodes()[inlet].id
            )));
        }
    }
    result.sort_by_key(|&(i, _)| i);
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn process_generated(
    index: usize,
    scenario: &LeakScenario,
    network: &NetworkModel,
    structural: &StructuralMatrices,
    layout: &SensorLayout,
    inlet_heads: &InletHeads,
    batch: &io::ScenarioBatch,
    config: &RunConfig,
) -> ProcessedScenario {
    let label = scenario.timestamp_label.clone();
    let mut row = ScenarioRow {
        label: label.clone(),
        head_rmse_cm: BTreeMap::new(),
        flow_rmse_lps: BTreeMap::new(),
        errors: BTreeMap::new(),
        scenario_error: None,
    };
    let failed = |row: ScenarioRow, index: usize, label: String| ProcessedScenario {
        index,
        label,
        truth: None,
        reference: None,
        readings: None,
        estimates: BTreeMap::new(),
        localization: BTreeMap::new(),
        row,
    };

    // per-scenario noise stream: root seed xor scenario index
    let noise = NoiseSpec {
        seed: batch.noise.seed ^ config.rng_seed ^ index as u64,
        ..batch.noise
    };
    let generated = match generate_scenario(
        network,
        structural,
        layout,
        inlet_heads,
        scenario,
        &batch.demand_range,
        &noise,
    ) {
        Ok(data) => data,
        Err(e) => {
            row.scenario_error = Some(format!("scenario synthesis: {e}"));
            return failed(row, index, label);
        }
    };
    // leak-free oracle reference with the same demand draw
    let reference_scenario = LeakScenario {
        leak_rate: 0.0,
        ..scenario.clone()
    };
    let reference = match generate_scenario(
        network,
        structural,
        layout,
        inlet_heads,
        &reference_scenario,
        &batch.demand_range,
        &noise,
    ) {
        Ok(data) => data.truth,
        Err(e) => {
            row.scenario_error = Some(format!("leak-free reference: {e}"));
            return failed(row, index, label);
        }
    };

    let mut estimates = BTreeMap::new();
    let mut localization = BTreeMap::new();
    for kind in &config.estimators {
        let name = kind.name().to_string();
        match estimate_scenario(
            network,
            structural,
            layout,
            *kind,
            &config.estimator_config,
            config.zeta,
            &generated.readings,
        ) {
            Ok(estimate) => {
                row.head_rmse_cm
                    .insert(name.clone(), rmse(&generated.truth.heads, &estimate.heads) * 100.0);
                row.flow_rmse_lps
                    .insert(name.clone(), rmse(&generated.truth.flows, &estimate.flows));
                match localize(
                    network,
                    &reference.heads,
                    &estimate.heads,
                    scenario.leak_pipe,
                    config.candidate_threshold,
                    &label,
                    &name,
                ) {
                    Ok(report) => {
                        localization.insert(name.clone(), report);
                    }
                    Err(e) => {
                        row.errors.insert(name.clone(), format!("localization: {e}"));
                    }
                }
                estimates.insert(name, estimate);
            }
            Err(e) => {
                row.errors.insert(name, e.to_string());
            }
        }
    }

    ProcessedScenario {
        index,
        label,
        truth: Some(generated.truth),
        reference: Some(reference),
        readings: Some(generated.readings),
        estimates,
        localization,
        row,
    }
}

fn process_ingested(
    index: usize,
    path: &Path,
    network: &NetworkModel,
    structural: &StructuralMatrices,
    layout: &SensorLayout,
    config: &RunConfig,
) -> ProcessedScenario {
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("scenario{index:03}"));
    let mut out = ProcessedScenario {
        index,
        label: label.clone(),
        truth: None,
        reference: None,
        readings: None,
        estimates: BTreeMap::new(),
        localization: BTreeMap::new(),
        row: ScenarioRow {
            label,
            head_rmse_cm: BTreeMap::new(),
            flow_rmse_lps: BTreeMap::new(),
            errors: BTreeMap::new(),
            scenario_error: None,
        },
    };
    let readings = match io::read_measurements(path, network, layout) {
        Ok(r) => r,
        Err(e) => {
            out.row.scenario_error = Some(e.to_string());
            return out;
        }
    };
    for kind in &config.estimators {
        let name = kind.name().to_string();
        match estimate_scenario(
            network,
            structural,
            layout,
            *kind,
            &config.estimator_config,
            config.zeta,
            &readings,
        ) {
            Ok(estimate) => {
                out.estimates.insert(name, estimate);
            }
            Err(e) => {
                out.row.errors.insert(name, e.to_string());
            }
        }
    }
    out.readings = Some(readings);
    out
}

/// Localization for one estimate against the leak-free oracle reference.
fn localize(
    network: &NetworkModel,
    reference_heads: &DVector<f64>,
    estimate_heads: &DVector<f64>,
    true_leak_pipe: usize,
    threshold: f64,
    label: &str,
    estimator: &str,
) -> Result<LocalizationReport> {
    let likelihood = node_likelihood(
        reference_heads,
        estimate_heads,
        format!("{label}/reference"),
        format!("{label}/{estimator}"),
    )?;
    let metric = pipe_metric(&likelihood, network)?;
    let candidates = candidate_set(&metric, threshold)?;
    kpi_report(network, &candidates, &metric, true_leak_pipe, threshold)
}

/// Sorted scenario files of an ingest directory (or the single given file).
fn ingest_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::validation(format!(
            "no .csv measurement files under {}",
            path.display()
        )));
    }
    Ok(files)
}

fn summarize(estimators: &[String], rows: &[ScenarioRow]) -> BTreeMap<String, EstimatorStats> {
    let mut stats = BTreeMap::new();
    for name in estimators {
        let heads: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.head_rmse_cm.get(name))
            .copied()
            .collect();
        let flows: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.flow_rmse_lps.get(name))
            .copied()
            .collect();
        if heads.is_empty() {
            continue;
        }
        let (head_mean, head_std) = mean_std(&heads);
        let (flow_mean, flow_std) = mean_std(&flows);
        stats.insert(
            name.clone(),
            EstimatorStats {
                head_mean_cm: head_mean,
                head_std_cm: head_std,
                flow_mean_lps: flow_mean,
                flow_std_lps: flow_std,
                scenarios_used: heads.len(),
            },
        );
    }
    stats
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Generation-only pass: synthesize every scenario of a batch and write
/// truth, leak-free reference and measurement files, without estimation.
/// Returns (scenario count, failure count).
pub fn generate_batch(
    network_path: &Path,
    layout_path: &Path,
    scenarios_path: &Path,
    output_dir: &Path,
    rng_seed: u64,
) -> Result<(usize, usize)> {
    let loaded = io::load_network(network_path)?;
    let network = loaded.model;
    let structural = build_structural(&network);
    let layout = io::load_layout(layout_path, &network)?;
    let batch = io::load_scenario_batch(scenarios_path, &network)?;
    let inlet_heads = resolve_inlet_heads(&network, &loaded.inlet_heads, &batch.inlet_heads)?;

    let mut failures = 0usize;
    for (index, scenario) in batch.scenarios.iter().enumerate() {
        let noise = NoiseSpec {
            seed: batch.noise.seed ^ rng_seed ^ index as u64,
            ..batch.noise
        };
        let dir = output_dir.join("scenarios").join(&scenario.timestamp_label);
        let generated = generate_scenario(
            &network,
            &structural,
            &layout,
            &inlet_heads,
            scenario,
            &batch.demand_range,
            &noise,
        );
        let reference = generate_scenario(
            &network,
            &structural,
            &layout,
            &inlet_heads,
            &LeakScenario {
                leak_rate: 0.0,
                ..scenario.clone()
            },
            &batch.demand_range,
            &noise,
        );
        match (generated, reference) {
            (Ok(data), Ok(reference)) => {
                io::save_state(&dir.join("truth.json"), &data.truth)?;
                io::save_state(&dir.join("reference.json"), &reference.truth)?;
                io::write_measurements(
                    &dir.join("measurements.csv"),
                    &network,
                    &layout,
                    &data.readings,
                )?;
            }
            (Err(e), _) | (_, Err(e)) => {
                failures += 1;
                io::atomic_write(
                    &dir.join("error.txt"),
                    format!("scenario synthesis failed: {e}\n").as_bytes(),
                )?;
            }
        }
    }
    Ok((batch.scenarios.len(), failures))
}

/// Re-scores localization for an existing batch directory at a (possibly
/// new) threshold, reusing the stored reference states and estimates.
pub fn relocalize_batch(
    network_path: &Path,
    layout_path: &Path,
    scenarios_path: &Path,
    batch_dir: &Path,
    threshold: f64,
) -> Result<BTreeMap<String, Vec<(String, LocalizationReport)>>> {
    let loaded = io::load_network(network_path)?;
    let network = loaded.model;
    let _layout = io::load_layout(layout_path, &network)?;
    let batch = io::load_scenario_batch(scenarios_path, &network)?;

    let mut localization: BTreeMap<String, Vec<(String, LocalizationReport)>> = BTreeMap::new();
    for scenario in &batch.scenarios {
        let label = &scenario.timestamp_label;
        let dir = batch_dir.join("scenarios").join(label);
        let reference = io::load_state(&dir.join("reference.json"))?;
        let mut estimate_paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::format(format!("{}: {e}", dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().starts_with("estimate_"))
                    .unwrap_or(false)
            })
            .collect();
        estimate_paths.sort();
        for path in estimate_paths {
            let estimate = io::state_file::EstimateFile::load(&path)?;
            let heads = DVector::from_vec(estimate.heads_m.clone());
            let report = localize(
                &network,
                &reference.heads,
                &heads,
                scenario.leak_pipe,
                threshold,
                label,
                &estimate.estimator,
            )?;
            io::write_json(
                &dir.join(format!("localization_{}.json", estimate.estimator)),
                &report,
            )?;
            localization
                .entry(estimate.estimator.clone())
                .or_default()
                .push((label.clone(), report));
        }
    }
    for (name, reports) in &localization {
        io::atomic_write(
            &batch_dir.join(format!("localization_{name}.txt")),
            io::report::render_localization_table(name, reports).as_bytes(),
        )?;
    }
    Ok(localization)
}

/// Paired per-scenario comparison of two estimators from one summary.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub baseline: String,
    pub candidate: String,
    pub rows: Vec<ComparisonRow>,
    /// Mean reduction of head RMSE relative to the baseline, percent;
    /// positive means the candidate is better.
    pub head_improvement_percent: f64,
    pub flow_improvement_percent: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    /// candidate - baseline, centimeters.
    pub head_delta_cm: f64,
    /// candidate - baseline, liters/second.
    pub flow_delta_lps: f64,
}

pub fn compare_estimators(
    summary: &BatchSummary,
    baseline: &str,
    candidate: &str,
) -> Result<ComparisonReport> {
    for name in [baseline, candidate] {
        if !summary.estimators.iter().any(|e| e == name) {
            return Err(Error::validation(format!(
                "estimator {name} is not part of the summary"
            )));
        }
    }
    let mut rows = Vec::new();
    let mut base_heads = Vec::new();
    let mut cand_heads = Vec::new();
    let mut base_flows = Vec::new();
    let mut cand_flows = Vec::new();
    for row in &summary.scenarios {
        let (Some(&bh), Some(&ch)) = (row.head_rmse_cm.get(baseline), row.head_rmse_cm.get(candidate))
        else {
            continue;
        };
        let (Some(&bf), Some(&cf)) = (row.flow_rmse_lps.get(baseline), row.flow_rmse_lps.get(candidate))
        else {
            continue;
        };
        rows.push(ComparisonRow {
            label: row.label.clone(),
            head_delta_cm: ch - bh,
            flow_delta_lps: cf - bf,
        });
        base_heads.push(bh);
        cand_heads.push(ch);
        base_flows.push(bf);
        cand_flows.push(cf);
    }
    if rows.is_empty() {
        return Err(Error::validation(
            "no scenarios where both estimators produced results",
        ));
    }
    let improvement = |base: &[f64], cand: &[f64]| -> f64 {
        let (bm, _) = mean_std(base);
        let (cm, _) = mean_std(cand);
        if bm == 0.0 {
            0.0
        } else {
            (bm - cm) / bm * 100.0
        }
    };
    Ok(ComparisonReport {
        baseline: baseline.to_string(),
        candidate: candidate.to_string(),
        head_improvement_percent: improvement(&base_heads, &cand_heads),
        flow_improvement_percent: improvement(&base_flows, &cand_flows),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_basics() {
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(rmse(&a, &a), 0.0);
        let b = DVector::from_vec(vec![2.0, 3.0, 4.0]);
        assert!((rmse(&a, &b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_requires_exactly_one_source() {
        let mut config = RunConfig::default();
        assert!(config.validate().is_err());
        config.scenario_batch_path = Some(PathBuf::from("x"));
        assert!(config.validate().is_ok());
        config.measurement_ingest_path = Some(PathBuf::from("y"));
        assert!(config.validate().is_err());
    }

    #[test]
    fn comparison_of_identical_estimator_is_zero() {
        let row = ScenarioRow {
            label: "s0".into(),
            head_rmse_cm: BTreeMap::from([("a".to_string(), 3.0), ("b".to_string(), 3.0)]),
            flow_rmse_lps: BTreeMap::from([("a".to_string(), 1.0), ("b".to_string(), 1.0)]),
            errors: BTreeMap::new(),
            scenario_error: None,
        };
        let summary = BatchSummary {
            format: SUMMARY_FORMAT.into(),
            version: SUMMARY_VERSION,
            rng_seed: 0,
            estimators: vec!["a".into(), "b".into()],
            rmse_available: true,
            scenarios: vec![row],
            stats: BTreeMap::new(),
            failed_scenarios: 0,
        };
        let report = compare_estimators(&summary, "a", "b").unwrap();
        assert_eq!(report.head_improvement_percent, 0.0);
        assert_eq!(report.rows[0].head_delta_cm, 0.0);
    }

    #[test]
    fn comparison_signs() {
        let mk_row = |label: &str, a: f64, b: f64| ScenarioRow {
            label: label.into(),
            head_rmse_cm: BTreeMap::from([("a".to_string(), a), ("b".to_string(), b)]),
            flow_rmse_lps: BTreeMap::from([("a".to_string(), a), ("b".to_string(), b)]),
            errors: BTreeMap::new(),
            scenario_error: None,
        };
        let summary = BatchSummary {
            format: SUMMARY_FORMAT.into(),
            version: SUMMARY_VERSION,
            rng_seed: 0,
            estimators: vec!["a".into(), "b".into()],
            rmse_available: true,
            scenarios: vec![mk_row("s0", 4.0, 2.0), mk_row("s1", 4.0, 6.0)],
            stats: BTreeMap::new(),
            failed_scenarios: 0,
        };
        let report = compare_estimators(&summary, "a", "b").unwrap();
        assert!(report.rows[0].head_delta_cm < 0.0);
        assert!(report.rows[1].head_delta_cm > 0.0);
        // baseline mean 4.0, candidate mean 4.0: no improvement
        assert_eq!(report.head_improvement_percent, 0.0);
    }

    #[test]
    fn estimator_kind_round_trip() {
        for kind in EstimatorKind::all() {
            assert_eq!(kind.name().parse::<EstimatorKind>().unwrap(), kind);
        }
        assert!("bogus".parse::<EstimatorKind>().is_err());
    }
}
