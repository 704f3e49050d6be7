//! Leak-agnostic head reconstruction from sparse pressure sensors.
//!
//! The interpolation program minimizes a graph-smoothness objective — each
//! node should match the degree-normalized average of its neighbors — plus a
//! directionality slack, subject to pinning the sensed heads:
//!
//! ```text
//!   min  1/2 [ h' (I-Psi)'(I-Psi) h + zeta * gamma^2 ]
//!   s.t. B h <= gamma * 1,   gamma >= gamma_min,   S h = measured
//! ```
//!
//! with `Psi` the row-stochastic diffusion matrix of the active weights.
//! For symmetric weights the quadratic equals the classic `L D^-2 L` form.
//! Plain weights use inverse pipe length; the analytical reweighting derives
//! them from a Hazen-Williams linearization around a reference state.

pub mod qp;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::{NetworkModel, SensorLayout, StructuralMatrices};
use qp::{solve_qp, QpProblem, QpSolution};

/// Floor for |h_i - h_j| in the analytical weights; the -0.46 power diverges
/// at zero gap. Chosen below realistic sensor resolution.
pub const AW_GAP_FLOOR: f64 = 1e-6;

/// Exponents of the analytical weight formula.
pub const AW_TAU_EXPONENT: f64 = -0.54;
pub const AW_GAP_EXPONENT: f64 = -0.46;

/// Lower bound keeping the slack variable's feasible set closed.
pub const GAMMA_MIN: f64 = 1e-9;

/// Default objective weight on the directionality slack.
pub const DEFAULT_ZETA: f64 = 100.0;

/// Which formula produced a weight set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    Gsi,
    Awgsi,
}

/// A weighted adjacency and its degree diagonal.
#[derive(Debug, Clone)]
pub struct InterpolationWeights {
    /// n x n nonnegative; nonzero exactly on edges.
    pub omega: DMatrix<f64>,
    /// Degree diagonal phi_ii = sum_j omega_ij.
    pub phi: DVector<f64>,
    pub source: WeightSource,
}

impl InterpolationWeights {
    /// Plain weights: omega = W (inverse pipe lengths), phi = D.
    pub fn gsi(structural: &StructuralMatrices) -> Self {
        InterpolationWeights {
            omega: structural.gsi_adjacency.clone(),
            phi: structural.degree.clone(),
            source: WeightSource::Gsi,
        }
    }

    /// Row-stochastic diffusion matrix Psi = Phi^-1 Omega.
    pub fn diffusion(&self) -> Result<DMatrix<f64>> {
        let n = self.phi.len();
        for i in 0..n {
            if self.phi[i] <= 0.0 {
                return Err(Error::structural(format!(
                    "node {i} has zero weight degree (isolated in the weight graph)"
                )));
            }
        }
        let mut psi = self.omega.clone();
        for i in 0..n {
            let inv = 1.0 / self.phi[i];
            for j in 0..n {
                psi[(i, j)] *= inv;
            }
        }
        Ok(psi)
    }
}

/// Analytical weights from a reference head vector: for each node the
/// neighbor weights are tau^-0.54 * |head gap|^-0.46, normalized to sum 1
/// over the neighborhood.
pub fn awgsi_weights(
    network: &NetworkModel,
    structural: &StructuralMatrices,
    reference_heads: &DVector<f64>,
) -> Result<InterpolationWeights> {
    let n = network.node_count();
    if reference_heads.len() != n {
        return Err(Error::validation(format!(
            "reference head vector length {} does not match node count {n}",
            reference_heads.len()
        )));
    }
    if reference_heads.iter().any(|h| !h.is_finite()) {
        return Err(Error::validation("reference heads must be finite"));
    }
    let mut omega = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut row_sum = 0.0;
        for &(u, pipe) in network.neighbors(i) {
            let tau = structural.resistance[pipe];
            let gap = (reference_heads[i] - reference_heads[u]).abs().max(AW_GAP_FLOOR);
            let raw = tau.powf(AW_TAU_EXPONENT) * gap.powf(AW_GAP_EXPONENT);
            omega[(i, u)] = raw;
            row_sum += raw;
        }
        for &(u, _) in network.neighbors(i) {
            omega[(i, u)] /= row_sum;
        }
    }
    let phi = DVector::from_fn(n, |i, _| omega.row(i).sum());
    Ok(InterpolationWeights {
        omega,
        phi,
        source: WeightSource::Awgsi,
    })
}

/// Diffusion-based state prediction matrix F = eps*I + (1-eps)*Phi^-1*Omega.
/// Row-stochastic with nonnegative entries; nonzero pattern is the identity
/// plus the adjacency.
#[derive(Debug, Clone)]
pub struct PredictionMatrix {
    pub matrix: DMatrix<f64>,
    pub epsilon: f64,
}

pub fn build_prediction_matrix(
    weights: &InterpolationWeights,
    epsilon: f64,
) -> Result<PredictionMatrix> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::validation(format!(
            "epsilon must be in [0, 1], got {epsilon}"
        )));
    }
    let psi = weights.diffusion()?;
    let n = psi.nrows();
    let mut f = psi * (1.0 - epsilon);
    for i in 0..n {
        f[(i, i)] += epsilon;
    }
    Ok(PredictionMatrix { matrix: f, epsilon })
}

/// Full interpolation output: reconstructed heads, the slack value and the
/// raw QP solution for diagnostics.
#[derive(Debug, Clone)]
pub struct InterpolationSolution {
    pub heads: DVector<f64>,
    pub gamma: f64,
    pub qp: QpSolution,
    /// The reduced program that was solved, kept for KKT auditing.
    pub problem: QpProblem,
}

/// Plain graph-smoothness interpolation of all nodal heads from the sensed
/// subset.
pub fn gsi_interpolate(
    structural: &StructuralMatrices,
    layout: &SensorLayout,
    head_measurements: &DVector<f64>,
    zeta: f64,
    oriented_incidence: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let weights = InterpolationWeights::gsi(structural);
    interpolate_full(&weights, layout, head_measurements, zeta, oriented_incidence)
        .map(|sol| sol.heads)
}

/// Interpolation with analytically reweighted edges.
pub fn awgsi_interpolate(
    layout: &SensorLayout,
    head_measurements: &DVector<f64>,
    weights: &InterpolationWeights,
    zeta: f64,
    oriented_incidence: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    interpolate_full(weights, layout, head_measurements, zeta, oriented_incidence)
        .map(|sol| sol.heads)
}

/// Shared implementation: eliminates the sensed heads, solves the reduced
/// strictly convex QP, and re-embeds. The equality constraints hold exactly
/// by substitution.
pub fn interpolate_full(
    weights: &InterpolationWeights,
    layout: &SensorLayout,
    head_measurements: &DVector<f64>,
    zeta: f64,
    oriented_incidence: &DMatrix<f64>,
) -> Result<InterpolationSolution> {
    let n = weights.phi.len();
    let m = oriented_incidence.nrows();
    let sensed = layout.pressure_nodes();
    if sensed.is_empty() {
        return Err(Error::validation("interpolation needs at least one pressure sensor"));
    }
    if head_measurements.len() != sensed.len() {
        return Err(Error::validation(format!(
            "got {} head measurements for {} pressure sensors",
            head_measurements.len(),
            sensed.len()
        )));
    }
    if head_measurements.iter().any(|h| !h.is_finite()) {
        return Err(Error::validation("head measurements must be finite"));
    }
    if !(zeta > 0.0) {
        return Err(Error::validation("zeta must be positive"));
    }

    // smoothness quadratic (I - Psi)'(I - Psi)
    let psi = weights.diffusion()?;
    let mut residual_map = -psi;
    for i in 0..n {
        residual_map[(i, i)] += 1.0;
    }
    let smooth = residual_map.transpose() * &residual_map;

    let mut is_sensed = vec![false; n];
    let mut sensed_value = vec![0.0; n];
    for (row, &i) in sensed.iter().enumerate() {
        is_sensed[i] = true;
        sensed_value[i] = head_measurements[row];
    }
    let free: Vec<usize> = (0..n).filter(|&i| !is_sensed[i]).collect();
    let nf = free.len();

    // fixed part of the head vector (zeros on free coordinates)
    let h_fixed = DVector::from_fn(n, |i, _| if is_sensed[i] { sensed_value[i] } else { 0.0 });

    // reduced quadratic over [free heads; gamma]
    let mut q = DMatrix::zeros(nf + 1, nf + 1);
    let mut c = DVector::zeros(nf + 1);
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            q[(r, s)] = smooth[(i, j)];
        }
    }
    q[(nf, nf)] = zeta;
    let coupling = &smooth * &h_fixed;
    for (r, &i) in free.iter().enumerate() {
        c[r] = coupling[i];
    }

    // B h <= gamma * 1  and  gamma >= gamma_min
    let mut a = DMatrix::zeros(m + 1, nf + 1);
    let mut b = DVector::zeros(m + 1);
    for k in 0..m {
        for (r, &i) in free.iter().enumerate() {
            a[(k, r)] = oriented_incidence[(k, i)];
        }
        a[(k, nf)] = -1.0;
        b[k] = -(oriented_incidence.row(k) * &h_fixed)[(0, 0)];
    }
    a[(m, nf)] = -1.0;
    b[m] = -GAMMA_MIN;

    let problem = QpProblem { q, c, a, b };
    let qp = solve_qp(&problem, 1e-10, 100)?;

    let mut heads = h_fixed;
    for (r, &i) in free.iter().enumerate() {
        heads[i] = qp.z[r];
    }
    let gamma = qp.z[nf];
    Ok(InterpolationSolution {
        heads,
        gamma,
        qp,
        problem,
    })
}
