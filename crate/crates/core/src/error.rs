use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty horizon")]
    EmptyHorizon,

    #[error("record for {customer_id} on {date} lies outside the horizon")]
    OutsideHorizon { customer_id: String, date: String },

    #[error("series shorter than window ({len} < {window})")]
    SeriesTooShort { len: usize, window: usize },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("missing feature {0}")]
    MissingFeature(String),

    #[error("no customers present in every required source")]
    EmptyIntersection,

    #[error("unsupported model format: {0}")]
    ModelFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Config(_) => "config",
            Error::EmptyHorizon => "empty_horizon",
            Error::OutsideHorizon { .. } => "outside_horizon",
            Error::SeriesTooShort { .. } => "series_too_short",
            Error::DegenerateLabels(_) => "degenerate_labels",
            Error::MissingFeature(_) => "missing_feature",
            Error::EmptyIntersection => "empty_intersection",
            Error::ModelFormat(_) => "model_format",
        }
    }
}
