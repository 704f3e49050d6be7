//! Scaled unscented transform: sigma-point generation and moment
//! reconstruction.
//!
//! For state dimension d the set holds 2d+1 columns: the mean, then
//! mean +/- eta * column of the covariance Cholesky factor, with
//! eta = sqrt(d + lambda) and lambda = d (alpha^2 - 1). Weights follow the
//! scaled transform: w0_mean = lambda / (d + lambda),
//! w0_cov = w0_mean + (1 - alpha^2 + beta^2), and all other weights
//! 1 / (2 (d + lambda)) for both moments.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::filters::belief::GaussianBelief;
use crate::linalg::cholesky_with_jitter;

/// Deterministic sample set representing a Gaussian belief.
#[derive(Debug, Clone)]
pub struct SigmaPointSet {
    /// d x (2d+1); column 0 is the mean.
    pub points: DMatrix<f64>,
    pub mean_weights: DVector<f64>,
    pub cov_weights: DVector<f64>,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

/// Generates the sigma points of a belief. The covariance square root is a
/// Cholesky factor with escalating jitter; failure past 1e-6 is an error.
pub fn sigma_points(belief: &GaussianBelief, alpha: f64, beta: f64) -> Result<SigmaPointSet> {
    let d = belief.dim();
    let df = d as f64;
    let lambda = df * (alpha * alpha - 1.0);
    let eta = (df + lambda).sqrt();

    let chol = cholesky_with_jitter(&belief.cov)?;
    let root = chol.l();

    let mut points = DMatrix::zeros(d, 2 * d + 1);
    points.column_mut(0).copy_from(&belief.mean);
    for i in 0..d {
        let spread = root.column(i) * eta;
        points.column_mut(1 + i).copy_from(&(&belief.mean + &spread));
        points.column_mut(1 + d + i).copy_from(&(&belief.mean - &spread));
    }

    let w_rest = 1.0 / (2.0 * (df + lambda));
    let mut mean_weights = DVector::from_element(2 * d + 1, w_rest);
    let mut cov_weights = mean_weights.clone();
    mean_weights[0] = lambda / (df + lambda);
    cov_weights[0] = mean_weights[0] + (1.0 - alpha * alpha + beta * beta);

    Ok(SigmaPointSet {
        points,
        mean_weights,
        cov_weights,
        eta,
        alpha,
        beta,
        lambda,
    })
}

impl SigmaPointSet {
    /// Weighted mean of transformed columns, summed in deviation form around
    /// the center column: since the weights sum to one this equals the
    /// direct weighted sum but avoids amplifying rounding by the O(1/alpha^2)
    /// center weight.
    pub fn reconstruct_mean(&self, values: &DMatrix<f64>) -> DVector<f64> {
        let center = values.column(0);
        let mut correction = DVector::zeros(values.nrows());
        for i in 1..values.ncols() {
            correction += (values.column(i) - center) * self.mean_weights[i];
        }
        &correction + center
    }

    /// Weighted covariance of transformed columns around `mean`.
    pub fn reconstruct_cov(&self, values: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
        let n = values.nrows();
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..values.ncols() {
            let dev = values.column(i) - mean;
            cov.syger(self.cov_weights[i], &dev, &dev, 1.0);
        }
        // syger fills one triangle; mirror it
        for r in 0..n {
            for c in 0..r {
                cov[(c, r)] = cov[(r, c)];
            }
        }
        cov
    }

    /// Weighted cross-covariance between state columns (this set) and
    /// transformed columns.
    pub fn cross_cov(
        &self,
        x_mean: &DVector<f64>,
        values: &DMatrix<f64>,
        y_mean: &DVector<f64>,
    ) -> DMatrix<f64> {
        let mut cov = DMatrix::zeros(self.points.nrows(), values.nrows());
        for i in 0..values.ncols() {
            let dx = self.points.column(i) - x_mean;
            let dy = values.column(i) - y_mean;
            cov.ger(self.cov_weights[i], &dx, &dy, 1.0);
        }
        cov
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_sigma_points() {
        let belief = GaussianBelief::isotropic(DVector::zeros(1), 1.0);
        let alpha = 1e-3;
        let set = sigma_points(&belief, alpha, 2.0).unwrap();
        let lambda = alpha * alpha - 1.0;
        let eta = (1.0 + lambda).sqrt();
        assert!((set.eta - eta).abs() < 1e-15);
        assert_eq!(set.points[(0, 0)], 0.0);
        assert!((set.points[(0, 1)] - eta).abs() < 1e-15);
        assert!((set.points[(0, 2)] + eta).abs() < 1e-15);
        assert!((set.mean_weights.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sut_reconstructs_moments() {
        let mean = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let cov = DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.4, 0.1, 0.4, 1.5, -0.2, 0.1, -0.2, 0.8],
        );
        let belief = GaussianBelief::new(mean.clone(), cov.clone()).unwrap();
        for alpha in [1e-3, 1e-2, 1.0] {
            let set = sigma_points(&belief, alpha, 2.0).unwrap();
            let m = set.reconstruct_mean(&set.points);
            assert!((&m - &mean).abs().max() < 1e-10, "alpha {alpha}");
            let p = set.reconstruct_cov(&set.points, &m);
            let rel = (&p - &cov).abs().max() / cov.abs().max();
            assert!(rel < 1e-8, "alpha {alpha}: relative error {rel:e}");
        }
    }

    #[test]
    fn diagonal_covariance_displaces_along_axes() {
        let mean = DVector::zeros(2);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let belief = GaussianBelief::new(mean, cov).unwrap();
        let set = sigma_points(&belief, 0.5, 2.0).unwrap();
        // column 1 moves only along axis 0, column 2 only along axis 1
        assert!((set.points[(0, 1)] - set.eta * 2.0).abs() < 1e-12);
        assert_eq!(set.points[(1, 1)], 0.0);
        assert_eq!(set.points[(0, 2)], 0.0);
        assert!((set.points[(1, 2)] - set.eta * 3.0).abs() < 1e-12);
    }

    #[test]
    fn weight_structure() {
        let belief = GaussianBelief::isotropic(DVector::zeros(4), 2.0);
        let (alpha, beta) = (1e-2, 2.0);
        let set = sigma_points(&belief, alpha, beta).unwrap();
        let d = 4.0;
        let lambda = d * (alpha * alpha - 1.0);
        for i in 1..9 {
            let expected = 1.0 / (2.0 * (d + lambda));
            assert!((set.mean_weights[i] - expected).abs() < 1e-12);
            assert!((set.cov_weights[i] - expected).abs() < 1e-12);
        }
        let w0c = lambda / (d + lambda) + (1.0 - alpha * alpha + beta * beta);
        assert!((set.cov_weights[0] - w0c).abs() < 1e-12);
    }
}
