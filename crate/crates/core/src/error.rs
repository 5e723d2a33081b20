use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("knowledge base has no triples")]
    EmptyKnowledgeBase,
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no {hops}-hop walk exists in the knowledge base")]
    NoWalk { hops: usize },
    #[error("invalid reasoning path: {0}")]
    InvalidPath(String),
    #[error("more than {cap} walks to enumerate; estimate the distribution by sampling instead")]
    EnumerationCap { cap: usize },
    #[error("no valid action at entity {0}")]
    NoValidAction(String),
    #[error("expert origins missing from the destination knowledge base: {}", .0.join(", "))]
    MissingOrigins(Vec<String>),
    #[error("component {value} outside the quantizer range [-4, 4)")]
    OutOfRange { value: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
