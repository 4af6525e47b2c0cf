use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node not found: {0}")]
    NodeNotFound(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("diff does not match the cached manifest: {0}")]
    StaleManifest(String),

    #[error("graph has no community assignment")]
    MissingCommunities,

    #[error("no sidecar record for {0}")]
    SidecarNotFound(String),

    #[error("sidecar for {path} is stale (record {found}, expected {expected})")]
    StaleSidecar {
        path: String,
        found: String,
        expected: String,
    },

    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Format {
            what: what.into(),
            message: message.to_string(),
        }
    }
}
