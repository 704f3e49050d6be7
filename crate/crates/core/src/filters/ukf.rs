//! Generic unscented Kalman filter step: prediction, measurement
//! propagation and correction, all through the scaled unscented transform.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filters::belief::GaussianBelief;
use crate::filters::sigma::{sigma_points, SigmaPointSet};

/// One UKF cycle.
///
/// `process` maps one state column to its successor; `measurement` maps the
/// whole sigma matrix (d x 2d+1) to measurement space column-by-column,
/// which lets implementations share work across columns. Sigma points are
/// regenerated from the predicted belief before measurement propagation.
pub fn ukf_step<P, M>(
    belief: &GaussianBelief,
    process: P,
    measurement: M,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
    alpha: f64,
    beta: f64,
) -> Result<GaussianBelief>
where
    P: Fn(&DVector<f64>) -> DVector<f64>,
    M: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    // prediction
    let set = sigma_points(belief, alpha, beta)?;
    let d = belief.dim();
    let mut propagated = DMatrix::zeros(d, 2 * d + 1);
    for i in 0..(2 * d + 1) {
        let col = process(&DVector::from_column_slice(set.points.column(i).as_slice()));
        propagated.column_mut(i).copy_from(&col);
    }
    let prior_mean = set.reconstruct_mean(&propagated);
    let prior_cov = set.reconstruct_cov(&propagated, &prior_mean) + q;
    let prior = GaussianBelief::new(prior_mean, prior_cov)?;

    correct_with_sigma(&prior, measurement, r, z, alpha, beta)
}

/// Measurement propagation + correction against an already-predicted prior.
/// Used directly by the pipeline estimators, whose prediction is linear and
/// computed exactly without sigma points.
pub fn correct_with_sigma<M>(
    prior: &GaussianBelief,
    measurement: M,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
    alpha: f64,
    beta: f64,
) -> Result<GaussianBelief>
where
    M: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let set = sigma_points(prior, alpha, beta)?;
    correct_with_prepared_sigma(prior, &set, measurement, r, z)
}

/// Innermost correction: caller supplies the sigma set drawn from `prior`.
/// A singular measurement covariance is an error.
pub(crate) fn correct_with_prepared_sigma<M>(
    prior: &GaussianBelief,
    set: &SigmaPointSet,
    measurement: M,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
) -> Result<GaussianBelief>
where
    M: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    correct_impl(prior, set, measurement, r, z, false).map(|(belief, _)| belief)
}

/// Correction with an indefiniteness escape hatch: when the reconstructed
/// measurement covariance fails to factor — the large negative center weight
/// of the scaled transform can push it indefinite where the measurement map
/// has unbounded curvature, e.g. the flow law near zero drop — its spectrum
/// is clamped and the step proceeds. Returns whether a repair happened.
pub(crate) fn correct_with_repair<M>(
    prior: &GaussianBelief,
    set: &SigmaPointSet,
    measurement: M,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
) -> Result<(GaussianBelief, bool)>
where
    M: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    correct_impl(prior, set, measurement, r, z, true)
}

fn correct_impl<M>(
    prior: &GaussianBelief,
    set: &SigmaPointSet,
    measurement: M,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
    repair_measurement_cov: bool,
) -> Result<(GaussianBelief, bool)>
where
    M: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let projected = measurement(&set.points);
    if projected.ncols() != set.points.ncols() {
        return Err(Error::validation(
            "measurement function changed the sigma column count",
        ));
    }
    let n_meas = projected.nrows();
    if r.nrows() != n_meas || z.len() != n_meas {
        return Err(Error::validation(format!(
            "measurement noise/vector sized {}x{} vs {} measurement rows",
            r.nrows(),
            z.len(),
            n_meas
        )));
    }

    let y_mean = set.reconstruct_mean(&projected);
    let mut pyy = set.reconstruct_cov(&projected, &y_mean) + r;
    let pxy = set.cross_cov(&prior.mean, &projected, &y_mean);

    let mut repaired = false;
    let chol = match pyy.clone().cholesky() {
        Some(ch) => ch,
        None if repair_measurement_cov => {
            let eig = pyy.clone().symmetric_eigen();
            let floor = 1e-12 * eig.eigenvalues.abs().max().max(1.0);
            let clamped =
                DVector::from_fn(eig.eigenvalues.len(), |i, _| eig.eigenvalues[i].max(floor));
            pyy = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            crate::linalg::symmetrize(&mut pyy);
            repaired = true;
            pyy.clone().cholesky().ok_or_else(|| {
                Error::Numerical("measurement covariance repair failed to factor".into())
            })?
        }
        None => {
            return Err(Error::Numerical(format!(
                "singular measurement covariance ({n_meas} rows, min diagonal {:.3e})",
                pyy.diagonal().min()
            )));
        }
    };
    // K = Pxy Pyy^-1  via  Pyy K' = Pxy'
    let gain = chol.solve(&pxy.transpose()).transpose();

    let mean = &prior.mean + &gain * (z - &y_mean);
    let cov = &prior.cov - &gain * &pyy * gain.transpose();
    let mut posterior = GaussianBelief::new(mean, cov)?;
    posterior.symmetrize();
    Ok((posterior, repaired))
}
