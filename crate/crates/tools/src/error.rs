use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, ToolError>;

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    /// Well-formed input that does not describe a valid object.
    #[error("{path}: {location}: {message}")]
    Invalid {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error(transparent)]
    Solver(#[from] dykstra::Error),

    #[error("{0}")]
    Usage(String),
}

impl ToolError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        ToolError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(path: impl Into<PathBuf>, location: impl Into<String>, message: impl Into<String>) -> Self {
        ToolError::Invalid {
            path: path.into(),
            location: location.into(),
            message: message.into(),
        }
    }
}
