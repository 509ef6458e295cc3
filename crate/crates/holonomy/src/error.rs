use thiserror::Error;

#[derive(Debug, Error)]
pub enum HolError {
    #[error("arity mismatch: form of degree {expected} applied to {got} tangents")]
    ArityMismatch { expected: usize, got: usize },
    #[error("chart mismatch: {0}")]
    ChartMismatch(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("membership violation: {0}")]
    Membership(String),
    #[error("resolution too low: {0}")]
    Resolution(String),
    #[error("unknown catalog id: {0}")]
    UnknownId(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, HolError>;
