use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Sherman-Morrison denominator `1 + c * u' A^-1 u` too close to zero.
    #[error("singular rank-one update (denominator {denominator:e})")]
    SingularUpdate { denominator: f64 },

    #[error("degenerate component: {0}")]
    DegenerateComponent(String),

    /// Rank-one covariance update rejected because the result would not be
    /// positive definite; the matrix and determinant are left untouched.
    #[error("skipped rank-one update (guard {guard:e})")]
    SkippedUpdate { guard: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: row {row}, column {column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn degenerate(reason: impl Into<String>) -> Self {
        Error::DegenerateComponent(reason.into())
    }
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
