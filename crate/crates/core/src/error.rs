use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:e} below -{clip:e}; apply a spectral shift first")]
    NotPsd { min_eig: f64, clip: f64 },

    #[error("convexity requires an extra ridge of at least {required:e}")]
    NotConvex { required: f64 },

    #[error("solver did not reach optimality: {0}")]
    Solver(String),

    #[error("point lies on the decision boundary; no finite shot count makes it reliable")]
    OnBoundary,

    #[error("mitigation failed: estimated depolarizing strength {0} is not below 1")]
    Mitigation(f64),

    #[error("dataset generation stalled after {0} candidates; try a smaller gap")]
    GenerationStalled(usize),

    #[error("schedule exhausted at N = {last_n} with empirical failure rate {last_delta}")]
    ScheduleExhausted { last_n: u64, last_delta: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
