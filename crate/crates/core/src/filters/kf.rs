//! Linear Kalman filter step and its flow-estimator specialization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filters::belief::GaussianBelief;

/// One predict + update cycle of the linear Kalman filter.
///
/// Prediction: x <- F x + B_u u, P <- F P F' + Q. Update with gain
/// K = P G' (G P G' + R)^-1 and posterior covariance (I - K G) P. An empty
/// measurement block (zero rows in `g`) skips the update, so the belief
/// evolves by the process model alone.
pub fn kf_step(
    belief: &GaussianBelief,
    f: &DMatrix<f64>,
    control: Option<(&DMatrix<f64>, &DVector<f64>)>,
    q: &DMatrix<f64>,
    g: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<GaussianBelief> {
    let d = belief.dim();
    if f.nrows() != d || f.ncols() != d || q.nrows() != d || q.ncols() != d {
        return Err(Error::validation("process matrices do not match state dimension"));
    }
    let n_meas = g.nrows();
    if g.ncols() != d && n_meas > 0 {
        return Err(Error::validation("measurement matrix does not match state dimension"));
    }
    if r.nrows() != n_meas || r.ncols() != n_meas || y.len() != n_meas {
        return Err(Error::validation("measurement block dimensions inconsistent"));
    }

    let mut mean = f * &belief.mean;
    if let Some((b_u, u)) = control {
        mean += b_u * u;
    }
    let mut cov = f * &belief.cov * f.transpose() + q;

    if n_meas > 0 {
        let innovation_cov = g * &cov * g.transpose() + r;
        let chol = innovation_cov.clone().cholesky().ok_or_else(|| {
            let diag_min = innovation_cov.diagonal().min();
            Error::Numerical(format!(
                "singular innovation covariance ({n_meas} rows, min diagonal {diag_min:.3e})"
            ))
        })?;
        // K = P G' S^-1  via  S K' = G P
        let gain = chol.solve(&(g * &cov)).transpose();
        mean += &gain * (y - g * &mean);
        let identity = DMatrix::identity(d, d);
        cov = (identity - &gain * g) * cov;
    }

    let mut posterior = GaussianBelief::new(mean, cov)?;
    posterior.symmetrize();
    Ok(posterior)
}

/// Flow-estimator step: identity prediction (the flow state is held and
/// only its uncertainty grows by Q) followed by the standard update against
/// the stacked real + virtual flow measurement.
pub fn flow_kf_step(
    flow_belief: &GaussianBelief,
    q_q: &DMatrix<f64>,
    g_q: &DMatrix<f64>,
    r_q: &DMatrix<f64>,
    z_q: &DVector<f64>,
) -> Result<GaussianBelief> {
    let identity = DMatrix::identity(flow_belief.dim(), flow_belief.dim());
    kf_step(flow_belief, &identity, None, q_q, g_q, r_q, z_q)
}
