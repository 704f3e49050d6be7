//! Gaussian state belief with the covariance hygiene every estimator step
//! relies on: re-symmetrization, a cheap positive-semidefiniteness check and
//! an eigenvalue-clamping repair.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// Tolerance on the most negative covariance eigenvalue a belief may carry.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// Mean and covariance of a Gaussian state estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::validation(format!(
                "covariance {}x{} does not match state dimension {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        let mut belief = GaussianBelief { mean, cov };
        belief.symmetrize();
        Ok(belief)
    }

    /// Isotropic belief: covariance = scale * I.
    pub fn isotropic(mean: DVector<f64>, scale: f64) -> Self {
        let d = mean.len();
        GaussianBelief {
            mean,
            cov: DMatrix::identity(d, d) * scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn symmetrize(&mut self) {
        symmetrize(&mut self.cov);
    }

    /// True when the minimum eigenvalue is at least -tol: Cholesky of
    /// (cov + tol*I) succeeding certifies exactly that.
    pub fn is_psd_within(&self, tol: f64) -> bool {
        let mut bumped = self.cov.clone();
        for i in 0..bumped.nrows() {
            bumped[(i, i)] += tol;
        }
        bumped.cholesky().is_some()
    }

    /// Clamps negative eigenvalues to zero. Errors when the spectrum cannot
    /// be computed or the repaired matrix still fails the check.
    pub fn repair_psd(&mut self) -> Result<()> {
        self.symmetrize();
        let eig = self.cov.clone().symmetric_eigen();
        let clamped = DVector::from_fn(eig.eigenvalues.len(), |i, _| eig.eigenvalues[i].max(0.0));
        self.cov = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        self.symmetrize();
        if self.is_psd_within(PSD_TOLERANCE) {
            Ok(())
        } else {
            Err(Error::Numerical(
                "covariance repair failed to restore positive semidefiniteness".into(),
            ))
        }
    }

    /// Mean must stay finite; called by the estimator loops.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("non-finite state mean in {context}")));
        }
        if self.cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite covariance entry in {context}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrize_and_psd_check() {
        let mut b = GaussianBelief::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3 + 1e-12, 0.3, 1.0]),
        )
        .unwrap();
        assert!((b.cov[(0, 1)] - b.cov[(1, 0)]).abs() == 0.0);
        assert!(b.is_psd_within(PSD_TOLERANCE));

        b.cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]); // eigenvalues 3, -1
        assert!(!b.is_psd_within(PSD_TOLERANCE));
        b.repair_psd().unwrap();
        assert!(b.is_psd_within(PSD_TOLERANCE));
        // clamped spectrum keeps the positive part
        let eig = b.cov.clone().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(vals[0] > -1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(GaussianBelief::new(DVector::zeros(2), DMatrix::zeros(3, 3)).is_err());
    }
}
