use thiserror::Error;

/// Errors raised by the computational kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument error: {0}")]
    Argument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("coset space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("numerical guard: {0}")]
    Guard(String),
    #[error("did not converge: {0}")]
    Convergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
