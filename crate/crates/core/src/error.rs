use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("truncated record at byte offset {offset}: {message}")]
    Truncated { offset: u64, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("duplicate vocabulary entry {0:?}")]
    DuplicateWord(String),

    #[error("non-finite value in row {0:?}")]
    NonFinite(String),

    #[error("row {0:?} has zero norm")]
    ZeroNorm(String),

    #[error("matrix is not unit-normalized (row {row} has norm {norm})")]
    NotNormalized { row: usize, norm: f64 },

    #[error("{what} ({got}) exceeds available {available}")]
    OutOfRange {
        what: &'static str,
        got: usize,
        available: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("correlation undefined: {0}")]
    ZeroVariance(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("stage {stage} failed: {cause}")]
    Stage { stage: &'static str, cause: Box<Error> },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
