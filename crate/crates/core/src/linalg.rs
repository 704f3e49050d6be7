//! Small shared dense linear-algebra helpers.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Cholesky with escalating diagonal jitter, 1e-12 to 1e-6 relative to the
/// largest diagonal entry.
pub(crate) fn cholesky_with_jitter(mtx: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(ch) = mtx.clone().cholesky() {
        return Ok(ch);
    }
    let scale = mtx.diagonal().abs().max().max(1.0);
    let mut jitter = 1e-12;
    while jitter <= 1e-6 {
        let mut bumped = mtx.clone();
        for i in 0..mtx.nrows() {
            bumped[(i, i)] += jitter * scale;
        }
        if let Some(ch) = bumped.cholesky() {
            return Ok(ch);
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(
        "Cholesky failed after jitter escalation to 1e-6".into(),
    ))
}

/// In-place (M + M^T) / 2.
pub(crate) fn symmetrize(mtx: &mut DMatrix<f64>) {
    let n = mtx.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (mtx[(i, j)] + mtx[(j, i)]);
            mtx[(i, j)] = avg;
            mtx[(j, i)] = avg;
        }
    }
}
