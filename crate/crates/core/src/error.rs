use thiserror::Error;

/// Failure modes shared by every numerical kernel in the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LabError {
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },
    #[error("precision target not reached: {0}")]
    Precision(String),
    #[error("target value {value} outside bracket [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },
    #[error("singularity: {0}")]
    Singularity(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("capability unavailable: {0}")]
    Capability(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
