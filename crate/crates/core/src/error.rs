use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CedError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("session {session}: {found} speakers found, a dyadic session needs exactly 2")]
    UnsupportedSession { session: String, found: usize },
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("session {0}: too few turns to build a non-identity shuffle")]
    DegenerateSession(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input too short: {0}")]
    InputTooShort(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite values in {0}")]
    Numeric(String),
    #[error("feature store: {0}")]
    FeatureStore(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("no pairs in direction {0}")]
    NoPairs(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("missing metadata: {0}")]
    MissingMetadata(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, CedError>;

impl CedError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CedError::Io { context: context.into(), source }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        CedError::Json { context: context.into(), source }
    }
}
