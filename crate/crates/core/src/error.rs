use thiserror::Error;

/// Errors raised by the tomography routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QdtError {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent shapes or invalid hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),
    /// The optimizer produced a non-finite value or a linear solve failed.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Fidelity is not defined for an operator with zero trace.
    #[error("undefined fidelity: {0}")]
    UndefinedFidelity(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, QdtError>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(QdtError::Config(msg.into()))
}

pub(crate) fn domain_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(QdtError::Domain(msg.into()))
}
