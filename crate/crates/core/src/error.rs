use thiserror::Error;

/// Failure modes reported by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid monotone function: {0}")]
    InvalidMonotone(String),
    #[error("invalid cumulative distribution: {0}")]
    InvalidCdf(String),
    #[error("invalid psi function: {0}")]
    InvalidPsi(String),
    #[error("invalid delta path: {0}")]
    InvalidDelta(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("value outside domain: {0}")]
    DomainError(String),
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
    #[error("reduced form is not feasible")]
    NotFeasible,
    #[error("reduced form is not extremal (gap {0:e})")]
    NotExtremal(f64),
    #[error("invalid score rule: {0}")]
    InvalidScore(String),
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("regularity violation: {0}")]
    RegularityViolation(String),
    #[error("grid too large: {points} points exceeds budget {budget}")]
    TooLarge { points: f64, budget: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
