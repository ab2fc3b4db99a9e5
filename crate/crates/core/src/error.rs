use thiserror::Error;

/// Errors produced by the solvers and operator assembly routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("missing context: {0}")]
    MissingContext(String),

    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("linear system is singular: {0}")]
    SingularSystem(String),

    #[error("solution degenerate: {0}")]
    DegenerateSolution(String),

    #[error("eigenvalue solver failed: {0}")]
    EigenFailure(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
