//! Errors raised while loading configs, running experiments and writing artifacts.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Malformed or incomplete configuration; the message names the offending field.
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] spinglass_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    /// A binary disorder dump that does not match the expected layout.
    #[error("disorder file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

pub type Result<T, E = RunError> = std::result::Result<T, E>;

/// A [`RunError::Config`] with the given message.
pub fn config_err(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

/// Maps an I/O error to [`RunError::Io`] tagged with `path`.
pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> RunError {
    let path = path.into();
    move |source| RunError::Io { path, source }
}
