use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite {what} at step {step}")]
    NonFinite { step: u64, what: &'static str },

    #[error("training step {step}: {source}")]
    Step { step: u64, source: Box<Error> },

    #[error("index {index} outside 1..={d}")]
    IndexOutOfRange { index: u64, d: u64 },

    #[error("inconsistent {category}: {detail}")]
    Inconsistent { category: &'static str, detail: String },

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("key: {0}")]
    Key(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn malformed(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Malformed { what, detail: detail.into() }
    }

    pub(crate) fn inconsistent(category: &'static str, detail: impl Into<String>) -> Self {
        Error::Inconsistent { category, detail: detail.into() }
    }
}
