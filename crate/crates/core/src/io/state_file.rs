//! Hydraulic state snapshots and estimator outputs as JSON documents.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydraulics::HydraulicState;

pub const FORMAT: &str = "hydrostate-state";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    format: String,
    version: u32,
    heads_m: Vec<f64>,
    flows_lps: Vec<f64>,
    demands_lps: Vec<f64>,
}

pub fn save_state(path: &Path, state: &HydraulicState) -> Result<()> {
    let file = StateFile {
        format: FORMAT.into(),
        version: VERSION,
        heads_m: state.heads.iter().copied().collect(),
        flows_lps: state.flows.iter().copied().collect(),
        demands_lps: state.demands.iter().copied().collect(),
    };
    super::write_json(path, &file)
}

pub fn load_state(path: &Path) -> Result<HydraulicState> {
    let file: StateFile = super::read_json(path)?;
    super::check_header(path, &file.format, file.version, FORMAT, VERSION)?;
    if file.heads_m.is_empty() || file.flows_lps.is_empty() {
        return Err(Error::format(format!("{}: empty state", path.display())));
    }
    if file.demands_lps.len() != file.heads_m.len() {
        return Err(Error::format(format!(
            "{}: demand/head length mismatch",
            path.display()
        )));
    }
    Ok(HydraulicState {
        heads: DVector::from_vec(file.heads_m),
        flows: DVector::from_vec(file.flows_lps),
        demands: DVector::from_vec(file.demands_lps),
    })
}

/// Estimator output document: heads always, flows when the estimator
/// produces them directly, convergence flags for diagnosis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateFile {
    pub format: String,
    pub version: u32,
    pub estimator: String,
    pub heads_m: Vec<f64>,
    pub flows_lps: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

pub const ESTIMATE_FORMAT: &str = "hydrostate-estimate";

impl EstimateFile {
    pub fn new(
        estimator: String,
        heads: &DVector<f64>,
        flows: &DVector<f64>,
        converged: bool,
        iterations: usize,
    ) -> Self {
        EstimateFile {
            format: ESTIMATE_FORMAT.into(),
            version: VERSION,
            estimator,
            heads_m: heads.iter().copied().collect(),
            flows_lps: flows.iter().copied().collect(),
            converged,
            iterations,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: EstimateFile = super::read_json(path)?;
        super::check_header(path, &file.format, file.version, ESTIMATE_FORMAT, VERSION)?;
        Ok(file)
    }
}
