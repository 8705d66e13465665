use std::path::PathBuf;

/// Errors produced anywhere in the collection pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown {kind} id `{id}`")]
    Lookup { kind: &'static str, id: String },

    #[error("embedding file format error: {0}")]
    Format(String),

    #[error("group has {size} items, need {required}")]
    GroupTooSmall { size: usize, required: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn lookup(kind: &'static str, id: impl Into<String>) -> Self {
        Error::Lookup {
            kind,
            id: id.into(),
        }
    }
}
