use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A malformed record in a line-oriented file. `line` is 1-based.
    #[error("{message}, line {line}")]
    Parse { line: usize, message: String },

    #[error("json: {0}")]
    Json(String),

    #[error("unknown label: {0}")]
    UnknownLabel(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite {0}")]
    NonFinite(String),

    #[error("no frames")]
    NoFrames,

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("stage: {0}")]
    Stage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end: 2 for data
    /// problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) => 3,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
