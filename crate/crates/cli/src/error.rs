use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Input(_) => 3,
            Self::Io { .. } => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }

    /// Maps a core error raised while reading `path`: I/O stays I/O,
    /// everything else is bad input.
    pub(crate) fn reading(path: impl Into<PathBuf>) -> impl FnOnce(metacog_core::Error) -> Self {
        let path = path.into();
        move |e| match e {
            metacog_core::Error::Io(source) => Self::Io { path, source },
            other => Self::Input(format!("{}: {other}", path.display())),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
