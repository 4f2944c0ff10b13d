use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EchoError {
    /// An input lies outside the domain where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("schedule validation failed: {0}")]
    Validation(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    /// Propagation finished but a numerical tolerance was breached.
    #[error("propagation failed: {0}")]
    Propagation(String),
}

pub type Result<T> = std::result::Result<T, EchoError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(EchoError::Domain(msg.into()))
}
