use thiserror::Error;

/// Errors raised by the discretization, inference and design routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("operator contract violated: {0}")]
    ContractViolation(String),

    #[error("singular linear system ({context}): zero pivot at row {row}")]
    SingularSystem { context: String, row: usize },

    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("covariance is not positive semi-definite: {0}")]
    IndefiniteCovariance(String),

    #[error("dense assembly of dimension {dim} exceeds the limit of {limit}")]
    MemoryGuard { dim: usize, limit: usize },

    #[error("{0} combinations exceed the exhaustive-search limit")]
    CombinatorialGuard(u128),

    #[error("coefficient of variation is undefined: mean {mean:e} vs std {std:e}")]
    DegenerateCv { mean: f64, std: f64 },

    #[error("design search aborted after {completed} steps: {source}")]
    SearchAborted {
        completed: usize,
        trace: Vec<f64>,
        indices: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
