//! Leak-candidate ranking and localization KPIs.
//!
//! The node likelihood is the min-max-normalized head-drop residual between
//! a leak-free reference state and the estimate under the leak; it is a
//! documented surrogate for candidate selection (node-level, in [0, 1],
//! thresholdable), configured as `likelihood_method = "residual_minmax"`.
//! Pipe scores average the endpoint node scores; candidates are the pipes at
//! or above the threshold.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DistanceUnit, NetworkModel};

/// Candidate-selection threshold on the pipe metric.
pub const DEFAULT_CANDIDATE_THRESHOLD: f64 = 0.7;

/// Identifier of the likelihood construction in reports and config files.
pub const LIKELIHOOD_METHOD: &str = "residual_minmax";

/// Per-node leak likelihood in [0, 1] with the provenance of the two states
/// it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLikelihood {
    pub values: DVector<f64>,
    pub reference_state: String,
    pub leak_state: String,
}

/// Min-max-normalized head drop caused by the leak. A constant residual
/// yields the all-zeros metric.
pub fn node_likelihood(
    reference_heads: &DVector<f64>,
    leak_heads: &DVector<f64>,
    reference_state: impl Into<String>,
    leak_state: impl Into<String>,
) -> Result<NodeLikelihood> {
    if reference_heads.len() != leak_heads.len() {
        return Err(Error::validation(format!(
            "reference ({}) and leak ({}) head vectors differ in length",
            reference_heads.len(),
            leak_heads.len()
        )));
    }
    let residual = reference_heads - leak_heads;
    let lo = residual.min();
    let hi = residual.max();
    let range = hi - lo;
    let values = if range > 0.0 {
        DVector::from_fn(residual.len(), |i, _| (residual[i] - lo) / range)
    } else {
        DVector::zeros(residual.len())
    };
    Ok(NodeLikelihood {
        values,
        reference_state: reference_state.into(),
        leak_state: leak_state.into(),
    })
}

/// Pipe-level metric: arithmetic mean of the two endpoint node values.
pub fn pipe_metric(node_metric: &NodeLikelihood, network: &NetworkModel) -> Result<DVector<f64>> {
    if node_metric.values.len() != network.node_count() {
        return Err(Error::validation(
            "node metric dimension does not match the network",
        ));
    }
    Ok(DVector::from_fn(network.pipe_count(), |k, _| {
        let pipe = &network.pipes()[k];
        0.5 * (node_metric.values[pipe.source] + node_metric.values[pipe.sink])
    }))
}

/// Pipes whose metric reaches the threshold (inclusive).
pub fn candidate_set(pipe_metric: &DVector<f64>, threshold: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::validation(format!(
            "threshold must lie in [0, 1], got {threshold}"
        )));
    }
    Ok((0..pipe_metric.len())
        .filter(|&k| pipe_metric[k] >= threshold)
        .collect())
}

/// Four-endpoint average distance between two pipes:
/// (1/4) * sum over endpoint pairs of shortest_path(u, v).
///
/// Read literally this gives a pipe a nonzero distance to itself, namely
/// half its endpoints' path distance; reports keep that convention.
pub fn pipe_to_pipe_distance(
    network: &NetworkModel,
    pipe_a: usize,
    pipe_b: usize,
    unit: DistanceUnit,
) -> f64 {
    let a = &network.pipes()[pipe_a];
    let b = &network.pipes()[pipe_b];
    let mut total = 0.0;
    for u in [a.source, a.sink] {
        let dist = network.shortest_paths_from(u, unit);
        for v in [b.source, b.sink] {
            total += dist[v];
        }
    }
    0.25 * total
}

/// The six KPIs of one scenario, plus the candidate list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    /// Ids of the high-likelihood candidate pipes, in pipe order.
    pub candidate_pipes: Vec<String>,
    /// Whether the true leak pipe made the candidate set (b_c).
    pub hit: bool,
    /// Metric-weighted mean candidate-to-leak distance, meters.
    pub weighted_distance_m: Option<f64>,
    /// Same in pipe hops.
    pub weighted_distance_pipes: Option<f64>,
    /// Candidate share of the network's pipes, percent (rho_c).
    pub search_ratio_percent: f64,
    /// Distance from the best-ranked candidate to the leak, meters.
    pub best_distance_m: Option<f64>,
    /// Same in pipe hops.
    pub best_distance_pipes: Option<f64>,
    pub threshold: f64,
}

/// Computes all six KPIs against the true leak pipe. An empty candidate set
/// reports a miss with absent distance KPIs, never padded values.
pub fn kpi_report(
    network: &NetworkModel,
    candidates: &[usize],
    pipe_metric: &DVector<f64>,
    true_leak_pipe: usize,
    threshold: f64,
) -> Result<LocalizationReport> {
    if true_leak_pipe >= network.pipe_count() {
        return Err(Error::validation("true leak pipe index out of range"));
    }
    let m = network.pipe_count() as f64;
    if candidates.is_empty() {
        return Ok(LocalizationReport {
            candidate_pipes: Vec::new(),
            hit: false,
            weighted_distance_m: None,
            weighted_distance_pipes: None,
            search_ratio_percent: 0.0,
            best_distance_m: None,
            best_distance_pipes: None,
            threshold,
        });
    }

    let hit = candidates.contains(&true_leak_pipe);
    let weight_sum: f64 = candidates.iter().map(|&k| pipe_metric[k]).sum();

    let mut weighted_m = 0.0;
    let mut weighted_hops = 0.0;
    for &k in candidates {
        let w = pipe_metric[k] / weight_sum;
        weighted_m += w * pipe_to_pipe_distance(network, k, true_leak_pipe, DistanceUnit::Meters);
        weighted_hops += w * pipe_to_pipe_distance(network, k, true_leak_pipe, DistanceUnit::Hops);
    }

    // best candidate: highest metric, ties to the lowest pipe index
    let best = candidates
        .iter()
        .copied()
        .max_by(|&a, &b| {
            pipe_metric[a]
                .partial_cmp(&pipe_metric[b])
                .unwrap()
                .then(b.cmp(&a))
        })
        .expect("non-empty");

    Ok(LocalizationReport {
        candidate_pipes: candidates
            .iter()
            .map(|&k| network.pipes()[k].id.clone())
            .collect(),
        hit,
        weighted_distance_m: Some(weighted_m),
        weighted_distance_pipes: Some(weighted_hops),
        search_ratio_percent: candidates.len() as f64 / m * 100.0,
        best_distance_m: Some(pipe_to_pipe_distance(
            network,
            best,
            true_leak_pipe,
            DistanceUnit::Meters,
        )),
        best_distance_pipes: Some(pipe_to_pipe_distance(
            network,
            best,
            true_leak_pipe,
            DistanceUnit::Hops,
        )),
        threshold,
    })
}
