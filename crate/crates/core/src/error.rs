use thiserror::Error;

/// Errors produced anywhere in the evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("document is empty after trimming whitespace")]
    EmptyDocument,

    #[error("segmenter backend failed: {0}")]
    SegmenterBackend(String),

    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),

    #[error("metric contract violated: {0}")]
    MetricContract(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("instance too large for exhaustive search ({paths} monotone paths)")]
    OracleTooLarge { paths: u128 },

    #[error("window of {k} sentences does not fit a document of {m}")]
    WindowTooLarge { k: usize, m: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("record {doc_id} skipped: {reason}")]
    RecordSkipped { doc_id: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
