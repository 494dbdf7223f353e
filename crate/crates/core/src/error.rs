//! Error type shared across the crate.

use std::path::PathBuf;

/// Everything that can go wrong while configuring or running an experiment.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimensions or ids do not line up.
    #[error("configuration error: {0}")]
    Config(String),

    /// A config file path does not exist.
    #[error("config not found: {}", .0.display())]
    ConfigNotFound(PathBuf),

    /// A structured input file failed to parse.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    /// An enumeration would exceed its configured cap.
    #[error("enumeration of {size} points exceeds cap {cap}")]
    EnumerationCap { size: u128, cap: u128 },

    /// A checkpoint does not match the network it is loaded into.
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
