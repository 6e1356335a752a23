use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    /// `key` is a dotted path into the config document, or a flag name.
    #[error("config error in {path} at `{key}`: {detail}")]
    Config { path: PathBuf, key: String, detail: String },

    #[error("format error in {path} at line {line}: {detail}")]
    Format { path: PathBuf, line: u64, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Sim(#[from] orthosim::Error),
}

impl CliError {
    pub(crate) fn config(path: impl Into<PathBuf>, key: impl Into<String>, detail: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            key: key.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
