use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("incomplete decision map: expected {expected} bins, got {got}")]
    IncompleteDecision { expected: usize, got: usize },

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no observations")]
    NoObservations,

    #[error("no trials")]
    NoTrials,

    #[error("instance too large for oracle: {0} corpora exceeds cap {1}")]
    OracleTooLarge(String, u64),

    #[error("malformed corpus line {line}: {reason}")]
    MalformedCorpus { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
