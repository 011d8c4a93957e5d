use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected:?}, got {got:?}")]
    InputShape { expected: Vec<usize>, got: Vec<usize> },

    #[error("non-finite value produced at layer {layer}")]
    NumericOverflow { layer: usize },

    #[error("{0}")]
    Domain(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("layer {layer} ({kind}) is not supported by path extraction")]
    ExtractionUnsupported { layer: usize, kind: &'static str },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("internal invariant broken: {0}")]
    Internal(String),

    #[error("generation gave up after {attempts} attempts ({accepted} accepted, rate {rate:.5})")]
    Generation {
        attempts: usize,
        accepted: usize,
        rate: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
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
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
