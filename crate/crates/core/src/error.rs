use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid raster dimensions {width}x{height}")]
    Dimension { width: usize, height: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("layout conflict: {0}")]
    LayoutConflict(String),

    #[error("no dilution assigned to well (row {row}, col {col})")]
    MissingDilution { row: usize, col: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("no wells detected ({} candidate regions)", candidates.len())]
    NoWellsDetected { candidates: Vec<crate::raster::BBox> },

    #[error("correction #{seq} rejected: {reason}")]
    Correction { seq: u64, reason: String },

    #[error("plate not found: {0}")]
    PlateNotFound(String),

    #[error("stale version: expected {expected}, record is at {actual}")]
    StaleVersion { expected: u64, actual: u64 },

    #[error("plate state conflict: {0}")]
    State(String),

    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
