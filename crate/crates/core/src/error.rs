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

    #[error("{origin}:{line}: {reason}")]
    Parse {
        origin: String,
        line: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sentence {sentence}: annotation layers are not aligned ({reason})")]
    Alignment { sentence: usize, reason: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("cannot encode an empty sentence")]
    EmptySentence,

    #[error("span ({start}, {end}) is out of range for a sentence of {len} tokens")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("zero-norm representation has no cosine similarity")]
    ZeroNorm,

    #[error("checkpoint hash mismatch: datastore was built with {expected}, model is {found}")]
    HashMismatch { expected: String, found: String },

    #[error("label set mismatch: expected {expected:?}, found {found:?}")]
    LabelMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("malformed {what} file: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("training aborted: {0}")]
    Training(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used to map errors onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Config,
    Data,
    Model,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Io => "io",
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Model => "model",
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Config(_) | Error::InvalidArgument(_) => ErrorKind::Config,
            Error::Parse { .. }
            | Error::Alignment { .. }
            | Error::EmptySentence
            | Error::SpanOutOfRange { .. }
            | Error::Format { .. }
            | Error::Json(_) => ErrorKind::Data,
            Error::Dimension { .. }
            | Error::ZeroNorm
            | Error::HashMismatch { .. }
            | Error::LabelMismatch { .. }
            | Error::Training(_) => ErrorKind::Model,
        }
    }
}
