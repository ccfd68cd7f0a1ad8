use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid configuration: `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("unsupported dimension {0}; supported dimensions are 1 to 4")]
    Dimension(usize),
    #[error("format `{format}` is not available for dimension {dimension}")]
    Format { format: String, dimension: usize },
    #[error("checkpoint validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] levelset_core::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

impl From<levelset_core::ConfigError> for Error {
    fn from(e: levelset_core::ConfigError) -> Self {
        match e {
            levelset_core::ConfigError::Invalid { field, message } => Error::config(field, message),
            other => Error::Core(other.into()),
        }
    }
}

impl From<levelset_core::RunError> for Error {
    fn from(e: levelset_core::RunError) -> Self {
        match e {
            levelset_core::RunError::Config(c) => c.into(),
            other => Error::Core(other.into()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
