use thiserror::Error;

/// Errors raised by the flow, discrete and diagnostic routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent or invalid construction parameters.
    #[error("configuration error: {0}")]
    Configuration(String),
    /// The requested operation is not supported by this object.
    #[error("capability error: {0}")]
    Capability(String),
    /// A numerical routine did not reach its target within budget.
    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Configuration(msg.into()))
}
