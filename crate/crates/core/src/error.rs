use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An update that does not match the current edge set (duplicate insert,
    /// delete of an absent edge).
    #[error("inconsistent update: {0}")]
    Consistency(String),

    #[error("inconsistent stream at update {position}: {message}")]
    StreamConsistency { position: usize, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("dense operation on {n} vertices exceeds the limit of {limit}")]
    DenseLimit { n: usize, limit: usize },

    #[error("bad state file: {0}")]
    StateFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
