use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid hyper-parameters: {0}")]
    InvalidHyperParams(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("importance weight is not finite (dimension {dimension})")]
    NonFiniteWeight { dimension: usize },

    #[error("importance weight of record {record} is not finite: {reason}")]
    NonFiniteRecordWeight { record: usize, reason: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty reward sequence")]
    EmptyRewards,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bound preconditions violated: {0}")]
    BoundPrecondition(String),

    #[error("malformed dataset line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
