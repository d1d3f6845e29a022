use thiserror::Error;

/// Errors raised by the numerical toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {0:?} lies outside the open unit disk")]
    OutsideDisk([f64; 2]),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("Cholesky factorization failed (pivot {pivot} non-positive after jitter {jitter:e})")]
    Cholesky { pivot: usize, jitter: f64 },

    #[error("iterative solver did not converge in {iterations} iterations (final relative residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
