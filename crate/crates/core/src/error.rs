use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("line {line}: duplicate query id `{id}`")]
    DuplicateId { line: usize, id: String },

    #[error("invalid template `{template}`: {message}")]
    InvalidTemplate { template: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("plan parse error at {position}: {message}")]
    PlanParse { position: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("training diverged at step {step}: non-finite loss ({detail})")]
    Diverged { step: usize, detail: String },

    #[error("requested {k} clusters but only {distinct} distinct vectors")]
    TooManyClusters { k: usize, distinct: usize },

    #[error("missing vector for query `{0}`")]
    MissingVector(String),

    #[error("model format: {0}")]
    Format(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checksum mismatch: model file is truncated or corrupted")]
    Checksum,

    #[error("model kind mismatch: file holds {found}, expected {expected}")]
    KindMismatch { found: String, expected: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
