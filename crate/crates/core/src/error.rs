use thiserror::Error;

/// Errors raised by the codec, the protocol and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate weights at index {index}: {reason}")]
    DegenerateWeight { index: usize, reason: String },

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("session exhausted after {rounds} rounds")]
    SessionExhausted { rounds: usize },

    #[error("closeness test degenerate: every hash entry overflowed")]
    TestDegenerate,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("code cache does not cover this configuration ({0}); run `polarwz construct` first")]
    CacheMiss(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub(crate) fn invalid_param(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn invalid_arg(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
