use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("word `{0}` is not in the lexicon")]
    Lexicon(String),
    #[error("corpus sampling failed: {0}")]
    Sampling(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("index {index} out of range (must be < {bound})")]
    Index { index: usize, bound: usize },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("k-means fit failed: {0}")]
    Fit(String),
    #[error("no speaker statistics for speaker {0}")]
    Speaker(usize),
    #[error("vocabulary capacity: {0}")]
    Capacity(String),
    #[error("id {0} is not in the vocabulary")]
    Decode(u32),
    #[error("sequence of length {len} exceeds max_len {max}")]
    Truncation { len: usize, max: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Schema { path: PathBuf, msg: String },
    #[error("provenance mismatch for {}: expected config hash {expected}, found {found}", path.display())]
    Provenance {
        path: PathBuf,
        expected: String,
        found: String,
    },
}

/// Coarse failure class, used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Numeric(_) => ErrorKind::Numeric,
            _ => ErrorKind::Validation,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
