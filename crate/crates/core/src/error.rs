use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest parse error at line {line}, column {column}: {message}")]
    ManifestParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("cannot generate route: {0}")]
    Generation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown algorithm `{0}` (expected gpal, geo-mal, mal, maxbw, geo-maxbw, 1-predict, n-predict or all)")]
    UnknownAlgorithm(String),

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
