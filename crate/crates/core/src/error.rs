use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the documented domain of an operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A parameter combination fails an admissibility condition.
    #[error("inadmissible: {0}")]
    Inadmissible(String),

    /// A numerical routine could not certify the requested accuracy.
    #[error("numerical failure: {0}")]
    NonConvergence(String),

    /// Walsh recursion exceeded the overflow guard.
    #[error("moment blow-up suspected: max |u| = {max_abs:e} at step {step}")]
    MomentBlowUp { step: usize, max_abs: f64 },

    /// Picard iterates stopped contracting.
    #[error("non-contraction: iterate distances failed to decrease for {0} consecutive steps")]
    NonContraction(usize),

    #[error("io: {0}")]
    Io(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn inadmissible(msg: impl Into<String>) -> Self {
        Error::Inadmissible(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::NonConvergence(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
