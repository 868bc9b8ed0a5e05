use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the simulation and learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("unknown segment `{0}`")]
    UnknownSegment(String),

    #[error("unknown branch `{0}`")]
    UnknownBranch(String),

    #[error("missing branch `{0}`")]
    MissingBranch(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical divergence at t = {t:.6} s: {what}")]
    NumericalDivergence { t: f64, what: String },

    #[error("CFL bound cannot be met: {0}")]
    CflViolation(String),

    #[error("hemodynamic result does not match tree: {0}")]
    Mismatch(String),

    #[error("empty CIP window: {0}")]
    EmptyWindow(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("concentration curve has no mass")]
    ZeroMass,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("no samples left after filtering: {0}")]
    EmptyAfterFilter(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("campaign failure rate too high: {failed} of {total} runs failed")]
    CampaignFailed { failed: usize, total: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
