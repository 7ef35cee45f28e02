use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no traces")]
    NoTraces,

    #[error("heterogeneous traces: {0}")]
    HeterogeneousTraces(String),

    #[error("traces are not aligned: lengths {0:?}")]
    UnalignedTraces(Vec<usize>),

    #[error("no reliable annotators for {video_id}/{dimension}")]
    NoReliableAnnotators { video_id: String, dimension: String },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("empty input")]
    EmptyInput,

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("undefined correlation (constant input)")]
    UndefinedCorrelation,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown feature: {0}")]
    UnknownFeature(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
}
