use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A weight, network output or loss stopped being finite.
    #[error("blow-up: {0}")]
    NonFinite(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// A theorem hypothesis required by a threshold calculator does not hold.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("malformed target spec: {0}")]
    TargetSpec(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("empty history")]
    EmptyHistory,

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
