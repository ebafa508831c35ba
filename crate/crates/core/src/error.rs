use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cannot sample uniformly from a zero-length interval")]
    ZeroLengthInterval,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance factorization failed: {0}")]
    FactorizationFailure(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
