//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a documented precondition (bad attribute,
    /// out-of-range index, duplicate id, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// The network graph itself is unusable (disconnected, self loop,
    /// parallel edge, isolated node).
    #[error("structural error: {0}")]
    Structural(String),

    /// A head drop is negative under the supplied pipe orientation; the
    /// caller must re-orient the incidence matrix first.
    #[error("orientation error: pipe {pipe} has negative head drop {drop:.6e}")]
    Orientation { pipe: usize, drop: f64 },

    /// An iterative solver ran out of iterations.
    #[error("solver error: {0}")]
    Solver(String),

    /// The quadratic program could not be solved to tolerance.
    #[error("optimization error: {0}")]
    Optimization(String),

    /// Matrix factorization or inversion failure.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An estimator state became non-finite.
    #[error("divergence error: {0}")]
    Divergence(String),

    /// File-format problem; message names the file and, when known, the line.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
