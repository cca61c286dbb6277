use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The variants fall into four families that callers (the CLI in particular)
/// map onto distinct exit codes: I/O, malformed data, configuration, and
/// numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("duplicate post id `{0}`")]
    DuplicatePostId(String),

    #[error("duplicate document title `{0}`")]
    DuplicateTitle(String),

    #[error("duplicate event id `{0}`")]
    DuplicateEventId(String),

    #[error("unresolvable evidence reference ({title}, {index})")]
    UnresolvedReference { title: String, index: usize },

    #[error("reply cycle through posts [{}]", .0.join(", "))]
    ReplyCycle(Vec<String>),

    #[error("line {line}: expected {expected} embedding values, found {found}")]
    EmbeddingDimension {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("empty sentence cannot be encoded")]
    EmptySentence,

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in the numeric kernel.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::ShapeMismatch { .. }
                | Error::NonFinite(_)
                | Error::NonFiniteGradient(_)
                | Error::UnknownParam(_)
                | Error::EmptySentence
        )
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
