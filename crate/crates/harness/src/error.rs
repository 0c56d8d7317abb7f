use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("field file {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error(transparent)]
    Core(#[from] peskin_core::Error),

    #[error("serialization: {0}")]
    Serialize(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for an error that prevented a run from finishing.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(peskin_core::Error::Degenerate { .. }) => crate::EXIT_DEGENERATE,
            _ => crate::EXIT_CONFIG,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
