use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] jafar_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("{path}: invalid configuration: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, msg: impl ToString) -> Self {
        Error::Parse { path: path.to_path_buf(), msg: msg.to_string() }
    }

    /// Process exit status: 2 for arguments and configuration, 3 for data, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Model(e) if e.is_numerical() => 4,
            Error::Model(jafar_core::Error::Config(_) | jafar_core::Error::InvalidArgument(_)) => 2,
            Error::Model(_) => 3,
            Error::Io { .. } | Error::Parse { .. } => 3,
            Error::Config { .. } | Error::Usage(_) => 2,
        }
    }
}
