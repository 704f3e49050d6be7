//! Scenario batch document: fixed inlet heads, demand range, noise spec and
//! the list of leak scenarios (pipe id, rate, seed, label).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkModel;
use crate::scenario::{DemandRange, LeakScenario, NoiseSpec};

pub const FORMAT: &str = "hydrostate-scenarios";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioBatchFile {
    format: String,
    version: u32,
    /// Fixed heads (meters) per inlet node id; merged over any heads the
    /// network file's transform declares.
    #[serde(default)]
    inlet_heads: BTreeMap<String, f64>,
    #[serde(default)]
    demand_range: DemandRange,
    #[serde(default)]
    noise: NoiseSpec,
    scenarios: Vec<ScenarioRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRecord {
    leak_pipe: String,
    leak_rate_lps: f64,
    seed: u64,
    label: String,
}

/// Parsed batch with pipe ids resolved to indices.
#[derive(Debug, Clone)]
pub struct ScenarioBatch {
    pub inlet_heads: BTreeMap<String, f64>,
    pub demand_range: DemandRange,
    pub noise: NoiseSpec,
    pub scenarios: Vec<LeakScenario>,
}

pub fn load_scenario_batch(path: &Path, network: &NetworkModel) -> Result<ScenarioBatch> {
    let file: ScenarioBatchFile = super::read_json(path)?;
    super::check_header(path, &file.format, file.version, FORMAT, VERSION)?;
    let mut labels = std::collections::HashSet::new();
    let scenarios = file
        .scenarios
        .iter()
        .map(|record| {
            if !labels.insert(record.label.as_str()) {
                return Err(Error::format(format!(
                    "{}: duplicate scenario label {}",
                    path.display(),
                    record.label
                )));
            }
            let leak_pipe = network.pipe_index(&record.leak_pipe).ok_or_else(|| {
                Error::format(format!(
                    "{}: scenario {} references unknown pipe {}",
                    path.display(),
                    record.label,
                    record.leak_pipe
                ))
            })?;
            Ok(LeakScenario {
                leak_pipe,
                leak_rate: record.leak_rate_lps,
                base_demand_seed: record.seed,
                timestamp_label: record.label.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioBatch {
        inlet_heads: file.inlet_heads,
        demand_range: file.demand_range,
        noise: file.noise,
        scenarios,
    })
}

pub fn save_scenario_batch(
    path: &Path,
    network: &NetworkModel,
    batch: &ScenarioBatch,
) -> Result<()> {
    let file = ScenarioBatchFile {
        format: FORMAT.into(),
        version: VERSION,
        inlet_heads: batch.inlet_heads.clone(),
        demand_range: batch.demand_range,
        noise: batch.noise,
        scenarios: batch
            .scenarios
            .iter()
            .map(|s| ScenarioRecord {
                leak_pipe: network.pipes()[s.leak_pipe].id.clone(),
                leak_rate_lps: s.leak_rate,
                seed: s.base_demand_seed,
                label: s.timestamp_label.clone(),
            })
            .collect(),
    };
    super::write_json(path, &file)
}
