use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("fixture lookup miss: {0}")]
    FixtureMiss(String),

    #[error("stale index: built with backend `{index}`, queried with `{backend}`")]
    StaleIndex { index: String, backend: String },

    #[error("distractor sampling exhausted after {attempts} attempts")]
    SamplingExhausted { attempts: usize },

    #[error("item {item_id}: {source}")]
    Item {
        item_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn for_item(self, item_id: &str) -> Self {
        Error::Item {
            item_id: item_id.to_string(),
            source: Box::new(self),
        }
    }

    pub fn is_generation_failure(&self) -> bool {
        match self {
            Error::Generation(_) => true,
            Error::Item { source, .. } => source.is_generation_failure(),
            _ => false,
        }
    }

    /// True for failures of the environment (backends, files) rather than of the inputs.
    pub fn is_backend_or_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Backend(_) | Error::FixtureMiss(_) | Error::Generation(_) => {
                true
            }
            Error::Item { source, .. } => source.is_backend_or_io(),
            _ => false,
        }
    }
}
