//! Steady-state hydraulics: the Hazen-Williams flow law, nodal mass
//! conservation, head-consistent pipe orientation, and a damped-Newton
//! ground-truth solver.
//!
//! Heads are in meters, flows and demands in liters/second. Consumption is
//! positive; inlet nodes show negative demand (they supply the network).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::{NetworkModel, StructuralMatrices, HW_EXPONENT};

/// Floor applied to |head drop| inside the flow-law derivative, where the
/// fractional exponent would otherwise blow up at zero drop.
pub const DROP_DERIVATIVE_FLOOR: f64 = 1e-9;

/// Residual contract of the steady-state solver (l/s mass balance).
pub const SOLVER_TOLERANCE: f64 = 1e-8;

/// Internal Newton target; iteration polishes well below the contract and
/// only gives up early when rounding stalls the line search.
const SOLVER_TARGET: f64 = 1e-10;

/// One steady-state snapshot of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicState {
    /// Nodal heads, meters.
    pub heads: DVector<f64>,
    /// Pipe flows, l/s, nonnegative; direction lives in the oriented
    /// incidence estimate.
    pub flows: DVector<f64>,
    /// Nodal demands, l/s, consumption positive.
    pub demands: DVector<f64>,
}

/// Head-consistent oriented incidence: each pipe row carries +1 at the
/// higher-head endpoint and -1 at the lower one, so drops along rows are
/// nonnegative. Head ties fall back to elevation order, then node index.
pub fn estimate_incidence(heads: &DVector<f64>, network: &NetworkModel) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(network.pipe_count(), network.node_count());
    for (k, pipe) in network.pipes().iter().enumerate() {
        let (a, z) = (pipe.source, pipe.sink);
        let source = if heads[a] != heads[z] {
            if heads[a] > heads[z] {
                a
            } else {
                z
            }
        } else {
            let (ea, ez) = (network.nodes()[a].elevation, network.nodes()[z].elevation);
            if ea > ez {
                a
            } else if ez > ea {
                z
            } else {
                a.min(z)
            }
        };
        let sink = if source == a { z } else { a };
        b[(k, source)] = 1.0;
        b[(k, sink)] = -1.0;
    }
    b
}

/// Oriented incidence from static elevations only (the default orientation
/// when no prior head estimate exists).
pub fn elevation_incidence(network: &NetworkModel) -> DMatrix<f64> {
    let elevations = DVector::from_fn(network.node_count(), |i, _| network.nodes()[i].elevation);
    estimate_incidence(&elevations, network)
}

/// Hazen-Williams flow from heads: q = (T^-1 B h)^(1/1.852).
///
/// The oriented incidence must produce nonnegative drops; a negative drop is
/// an orientation error and the caller should re-orient first.
pub fn hazen_williams_flow(
    heads: &DVector<f64>,
    oriented_incidence: &DMatrix<f64>,
    resistance: &DVector<f64>,
) -> Result<DVector<f64>> {
    let drops = oriented_incidence * heads;
    let mut flows = DVector::zeros(drops.len());
    for k in 0..drops.len() {
        let drop = drops[k];
        if drop < 0.0 {
            return Err(Error::Orientation { pipe: k, drop });
        }
        flows[k] = (drop / resistance[k]).powf(1.0 / HW_EXPONENT);
    }
    Ok(flows)
}

/// Column-wise Hazen-Williams flow with negative drops clamped to zero.
///
/// Off-center sigma points can produce negative drops even when the
/// incidence is oriented at the central column; clamping keeps the
/// measurement map continuous across the whole sigma set.
pub fn hazen_williams_flow_clamped(
    head_columns: &DMatrix<f64>,
    oriented_incidence: &DMatrix<f64>,
    resistance: &DVector<f64>,
) -> DMatrix<f64> {
    let drops = oriented_incidence * head_columns;
    DMatrix::from_fn(drops.nrows(), drops.ncols(), |k, c| {
        let drop = drops[(k, c)].max(0.0);
        (drop / resistance[k]).powf(1.0 / HW_EXPONENT)
    })
}

/// Nodal demands implied by flows: c = -B^T q (consumption positive).
pub fn nodal_balance(flows: &DVector<f64>, oriented_incidence: &DMatrix<f64>) -> DVector<f64> {
    -(oriented_incidence.transpose() * flows)
}

/// Fixed-head boundary condition: (node index, head in meters) pairs.
pub type InletHeads = Vec<(usize, f64)>;

fn signed_flow(drop: f64, tau: f64) -> f64 {
    drop.signum() * (drop.abs() / tau).powf(1.0 / HW_EXPONENT)
}

fn signed_flow_derivative(drop: f64, tau: f64) -> f64 {
    let mag = drop.abs().max(DROP_DERIVATIVE_FLOOR);
    (mag / tau).powf(1.0 / HW_EXPONENT - 1.0) / (HW_EXPONENT * tau)
}

/// Mass-balance residual at every node for the given free-node demands:
/// r = c + B^T s(h), where s are signed flows in construction orientation.
fn balance_residual(
    structural: &StructuralMatrices,
    heads: &DVector<f64>,
    demands: &DVector<f64>,
) -> DVector<f64> {
    let drops = &structural.incidence * heads;
    let signed = DVector::from_fn(drops.len(), |k, _| signed_flow(drops[k], structural.resistance[k]));
    demands + structural.incidence.transpose() * signed
}

/// Solves the steady state of the network: fixed heads at the given inlets,
/// prescribed demands elsewhere.
///
/// Damped Newton on the free nodal heads; flows are eliminated through the
/// Hazen-Williams law. Demands at inlet positions are ignored (inlets
/// balance the network). The returned state carries head-consistent
/// nonnegative flows and the realized demand vector -B^T q.
pub fn solve_steady_state(
    network: &NetworkModel,
    structural: &StructuralMatrices,
    inlet_heads: &InletHeads,
    demands: &DVector<f64>,
) -> Result<HydraulicState> {
    let n = network.node_count();
    if demands.len() != n {
        return Err(Error::validation(format!(
            "demand vector length {} does not match node count {n}",
            demands.len()
        )));
    }
    if inlet_heads.is_empty() {
        return Err(Error::validation("at least one inlet head must be fixed"));
    }
    let mut fixed = vec![None; n];
    for &(node, head) in inlet_heads {
        if node >= n {
            return Err(Error::validation(format!("inlet node index {node} out of range")));
        }
        if !head.is_finite() {
            return Err(Error::validation("inlet head must be finite"));
        }
        fixed[node] = Some(head);
    }
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    for &i in &free {
        if demands[i] < 0.0 {
            return Err(Error::validation(format!(
                "negative demand {} at non-inlet node {i}",
                demands[i]
            )));
        }
    }

    let mut heads = initial_heads(network, &fixed);
    if free.is_empty() {
        return Ok(assemble_state(network, structural, &heads));
    }

    // Demand continuation: try the full load first, fall back to ramping it
    // up in stages when Newton stalls.
    let schedules: [&[f64]; 2] = [&[1.0], &[0.25, 0.5, 0.75, 1.0]];
    let mut last_err = None;
    for schedule in schedules {
        let mut trial_heads = heads.clone();
        let mut ok = true;
        for &scale in schedule {
            let scaled = demands * scale;
            match newton_heads(structural, &free, &mut trial_heads, &scaled) {
                Ok(()) => {}
                Err(e) => {
                    last_err = Some(e);
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            heads = trial_heads;
            let state = assemble_state(network, structural, &heads);
            return Ok(state);
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Solver("steady state did not converge".into())))
}

/// Initial guess: linearized network solve around a representative flow
/// scale, falling back to near-flat heads below the highest inlet.
fn initial_heads(network: &NetworkModel, fixed: &[Option<f64>]) -> DVector<f64> {
    let n = network.node_count();
    let top = fixed
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut heads = DVector::from_element(n, top);
    // small monotone decay away from the inlets keeps initial drops oriented
    let mut hops = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for i in 0..n {
        if let Some(h) = fixed[i] {
            heads[i] = h;
            hops[i] = 0;
            queue.push_back(i);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &(u, _) in network.neighbors(v) {
            if hops[u] == usize::MAX {
                hops[u] = hops[v] + 1;
                queue.push_back(u);
            }
        }
    }
    for i in 0..n {
        if fixed[i].is_none() {
            heads[i] = top - 1e-3 * hops[i] as f64;
        }
    }
    heads
}

fn newton_heads(
    structural: &StructuralMatrices,
    free: &[usize],
    heads: &mut DVector<f64>,
    demands: &DVector<f64>,
) -> Result<()> {
    const MAX_ITERS: usize = 120;

    let mut residual = balance_residual(structural, heads, demands);
    let mut norm = free_norm_inf(&residual, free);
    for _ in 0..MAX_ITERS {
        if norm < SOLVER_TARGET {
            return Ok(());
        }
        let jac = free_jacobian(structural, heads, free);
        let rhs = DVector::from_fn(free.len(), |r, _| -residual[free[r]]);
        let delta = jac
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .or_else(|| jac.lu().solve(&rhs))
            .ok_or_else(|| Error::Numerical("singular hydraulic Jacobian".into()))?;

        // backtracking line search on the residual norm
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = heads.clone();
            for (r, &i) in free.iter().enumerate() {
                trial[i] += step * delta[r];
            }
            let trial_residual = balance_residual(structural, &trial, demands);
            let trial_norm = free_norm_inf(&trial_residual, free);
            if trial_norm < norm || trial_norm < SOLVER_TARGET {
                *heads = trial;
                residual = trial_residual;
                norm = trial_norm;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // rounding floor reached; fine as long as the contract holds
            break;
        }
    }
    if norm < SOLVER_TOLERANCE {
        Ok(())
    } else {
        Err(Error::Solver(format!(
            "no convergence after {MAX_ITERS} iterations, residual {norm:.3e}"
        )))
    }
}

fn free_norm_inf(residual: &DVector<f64>, free: &[usize]) -> f64 {
    free.iter().map(|&i| residual[i].abs()).fold(0.0, f64::max)
}

/// Jacobian of the free residual block: (B^T diag(s') B) restricted to free
/// rows and columns. Symmetric positive definite for a connected network
/// with at least one fixed head.
fn free_jacobian(
    structural: &StructuralMatrices,
    heads: &DVector<f64>,
    free: &[usize],
) -> DMatrix<f64> {
    let m = structural.incidence.nrows();
    let drops = &structural.incidence * heads;
    let weights = DVector::from_fn(m, |k, _| {
        signed_flow_derivative(drops[k], structural.resistance[k])
    });
    let mut pos = vec![usize::MAX; structural.incidence.ncols()];
    for (r, &i) in free.iter().enumerate() {
        pos[i] = r;
    }
    let mut jac = DMatrix::zeros(free.len(), free.len());
    for k in 0..m {
        let row = structural.incidence.row(k);
        let (mut a, mut b) = (usize::MAX, usize::MAX);
        for j in 0..row.len() {
            if row[j] > 0.0 {
                a = j;
            } else if row[j] < 0.0 {
                b = j;
            }
        }
        let (pa, pb) = (pos[a], pos[b]);
        let w = weights[k];
        if pa != usize::MAX {
            jac[(pa, pa)] += w;
        }
        if pb != usize::MAX {
            jac[(pb, pb)] += w;
        }
        if pa != usize::MAX && pb != usize::MAX {
            jac[(pa, pb)] -= w;
            jac[(pb, pa)] -= w;
        }
    }
    jac
}

fn assemble_state(
    network: &NetworkModel,
    structural: &StructuralMatrices,
    heads: &DVector<f64>,
) -> HydraulicState {
    let oriented = estimate_incidence(heads, network);
    let flows = hazen_williams_flow(heads, &oriented, &structural.resistance)
        .expect("head-consistent orientation cannot produce negative drops");
    let demands = nodal_balance(&flows, &oriented);
    HydraulicState {
        heads: heads.clone(),
        flows,
        demands,
    }
}

/// Residual report for a solved state: worst nodal mass-balance error at
/// non-inlet nodes against the prescribed demands, and worst per-pipe
/// Hazen-Williams inconsistency.
pub fn residual_report(
    network: &NetworkModel,
    structural: &StructuralMatrices,
    state: &HydraulicState,
    demands: &DVector<f64>,
) -> (f64, f64) {
    let oriented = estimate_incidence(&state.heads, network);
    let implied = nodal_balance(&state.flows, &oriented);
    let mut mass = 0.0f64;
    for i in 0..network.node_count() {
        if !network.nodes()[i].is_inlet {
            mass = mass.max((implied[i] - demands[i]).abs());
        }
    }
    let drops = &oriented * &state.heads;
    let mut hw = 0.0f64;
    for k in 0..network.pipe_count() {
        let model_drop = structural.resistance[k] * state.flows[k].powf(HW_EXPONENT);
        hw = hw.max((drops[k] - model_drop).abs());
    }
    (mass, hw)
}
