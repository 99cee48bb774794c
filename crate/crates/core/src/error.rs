use std::path::PathBuf;

use crate::llm::LlmError;

/// Errors raised by the construction pipeline and its file formats.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed triple: {0}")]
    MalformedTriple(String),

    #[error("empty entity surface")]
    EmptyEntity,

    #[error("illegal status transition for `{entity}`: {from} -> {to}")]
    IllegalTransition {
        entity: String,
        from: crate::model::NodeStatus,
        to: crate::model::NodeStatus,
    },

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("no sentence in the corpus mentions `{0}`")]
    NoContext(String),

    #[error("open KG is empty")]
    EmptyKg,

    #[error("insufficient pool: requested {requested}, only {available} available")]
    InsufficientPool { requested: usize, available: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid rule: {0}")]
    InvalidRule(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("missing judgments for {} triple(s): {}", .0.len(), .0.join("; "))]
    MissingJudgment(Vec<String>),

    #[error("duplicate judgment for {key} by judge `{judge}`")]
    DuplicateJudgment { key: String, judge: String },

    #[error("judge files cover different triples: {0}")]
    KeyMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unknown export format `{0}` (expected dot, graphml or tsv)")]
    UnknownFormat(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
