use thiserror::Error;

/// Errors raised by the simulator and the key-rate calculator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Signal and reference sequences do not line up with the pulse schedule.
    #[error("schedule error: {0}")]
    Schedule(String),

    /// A statistical estimate is undefined for the supplied data.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// A numerical quantity left its physical range (e.g. a symplectic
    /// eigenvalue below one).
    #[error("numerical domain error: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
