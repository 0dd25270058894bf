use std::path::PathBuf;

use thiserror::Error;

use crate::reasoner::ReasoningTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Load { line: usize, message: String },

    #[error("unknown {kind} handle {id}")]
    UnknownHandle { kind: &'static str, id: u32 },

    #[error("unknown topic entity: {}", .0.join(", "))]
    UnknownTopic(Vec<String>),

    #[error("super-relation mapping: {0}")]
    Mapping(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("oracle failure: {error}")]
    Oracle {
        error: OracleError,
        /// Trace accumulated up to the failing call.
        partial: Box<ReasoningTrace>,
    },

    #[error("{0}")]
    Dataset(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{}: {error}", .path.display())]
    Io { path: PathBuf, error: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, error: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            error,
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("transport: {0}")]
    Transport(String),

    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },

    #[error("unparsable response: {0}")]
    Parse(String),
}
