use thiserror::Error;

/// Errors raised by the library. The CLI maps them onto exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("input outside the domain: {0}")]
    Domain(String),

    #[error("unbounded demand: {0}")]
    Unbounded(String),

    #[error("incompatible: {0}")]
    Incompatible(String),

    #[error("not converged after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
