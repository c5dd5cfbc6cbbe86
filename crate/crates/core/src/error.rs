use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unknown fine label `{0}`")]
    UnknownFineLabel(String),

    #[error("invalid probability {0}: must be finite and strictly positive")]
    InvalidProbability(f64),

    #[error("invalid score {score} for label `{label}`: scores must lie in 1..=100")]
    InvalidScore { label: String, score: i64 },

    #[error("score table is empty")]
    EmptyScoreTable,

    #[error("invalid schedule parameters: transition epoch {transition} must satisfy 1 <= L <= E = {total}")]
    InvalidScheduleParams { total: usize, transition: usize },

    #[error("schedule exhausted: already at final epoch {0}")]
    ScheduleExhausted(usize),

    #[error("cannot reverse score 100 for label `{0}`: reversed score would be 0")]
    ReversalOutOfRange(String),

    #[error("invalid sampling weight {weight} at index {index}")]
    InvalidWeight { index: usize, weight: f64 },

    #[error("invalid class profile: {0}")]
    ProfileError(String),

    #[error("{path}:{line}: {message}")]
    ManifestParseError {
        path: String,
        line: u64,
        message: String,
    },

    #[error("plan mismatch: {0}")]
    PlanMismatch(String),

    #[error("shape mismatch: expected dimension {expected}, got {actual}")]
    ShapeError { expected: usize, actual: usize },

    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("labels contain a single class ({positives} positives, {negatives} negatives)")]
    DegenerateLabels { positives: usize, negatives: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("unfair comparison: {0}")]
    UnfairComparison(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    /// Stable identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyDataset => "EmptyDataset",
            Error::UnknownFineLabel(_) => "UnknownFineLabel",
            Error::InvalidProbability(_) => "InvalidProbability",
            Error::InvalidScore { .. } => "InvalidScore",
            Error::EmptyScoreTable => "EmptyScoreTable",
            Error::InvalidScheduleParams { .. } => "InvalidScheduleParams",
            Error::ScheduleExhausted(_) => "ScheduleExhausted",
            Error::ReversalOutOfRange(_) => "ReversalOutOfRange",
            Error::InvalidWeight { .. } => "InvalidWeight",
            Error::ProfileError(_) => "ProfileError",
            Error::ManifestParseError { .. } => "ManifestParseError",
            Error::PlanMismatch(_) => "PlanMismatch",
            Error::ShapeError { .. } => "ShapeError",
            Error::NonFinite { .. } => "NonFinite",
            Error::DegenerateLabels { .. } => "DegenerateLabels",
            Error::LengthMismatch(_) => "LengthMismatch",
            Error::UnfairComparison(_) => "UnfairComparison",
            Error::Config(_) => "Config",
            Error::Io { .. } => "Io",
            Error::Parse { .. } => "Parse",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
