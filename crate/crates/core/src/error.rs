use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the simulator, the trainer and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown base station id {0}")]
    UnknownBaseStation(usize),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("no path between node {from} and node {to}")]
    NoPath { from: usize, to: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("validation error at line {line}: {msg}")]
    Validation { line: u64, msg: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("numerical error: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
