use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Caller supplied inconsistent or out-of-range arguments.
    #[error("usage error: {0}")]
    Usage(String),

    /// A mathematical precondition does not hold (e.g. a significantly
    /// negative eigenvalue passed to a matrix logarithm).
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear program or semidefinite program has no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative method failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A configuration field is missing or violates its constraint.
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
