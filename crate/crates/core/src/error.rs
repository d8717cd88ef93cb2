use thiserror::Error;

/// Errors produced anywhere in the selection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    Converge {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate denominator at index {index}")]
    DegenerateDenominator { index: usize },

    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    InvalidCovariance { min_eigenvalue: f64 },

    #[error("parse error at line {line}, column {col}: {reason}")]
    Parse { line: usize, col: usize, reason: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("zero-variance columns: {columns:?}")]
    ZeroVariance { columns: Vec<usize> },

    #[error("negative value under log transform at row {row}, column {col}")]
    NegativeUnderLog { row: usize, col: usize },

    #[error("bad ensemble file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
