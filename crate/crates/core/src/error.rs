use thiserror::Error;

/// Failures of geometric evaluation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeomError {
    #[error("point outside the admissible domain: {0}")]
    Inadmissible(String),
    #[error("singular or ill-conditioned matrix (condition {condition:e})")]
    Singular { condition: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("path optimizer did not converge after {iterations} iterations (last relative change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
}

pub type Result<T> = std::result::Result<T, GeomError>;
