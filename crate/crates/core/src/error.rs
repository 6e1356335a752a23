use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two parameter layouts disagree.
    #[error("conformance error in group `{group}`: {detail}")]
    Conformance { group: String, detail: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Staleness must be at least one round.
    #[error("staleness accounting error: staleness {0} is below 1")]
    Staleness(u64),

    #[error("data error: {0}")]
    Data(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("format error in {path} at {location}: {detail}")]
    Format {
        path: PathBuf,
        location: String,
        detail: String,
    },

    #[error("non-finite value in group `{0}`")]
    NonFinite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn conformance(group: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Conformance {
            group: group.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(
        path: impl Into<PathBuf>,
        location: impl Into<String>,
        detail: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.into(),
            location: location.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
