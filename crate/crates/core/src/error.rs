use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected} categories, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("empty particle ensemble")]
    EmptyEnsemble,

    #[error("observation index {index} out of range (assimilated {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },

    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },

    #[error("run {run_id}: {message}")]
    Run { run_id: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
