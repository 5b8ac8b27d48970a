use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box [{x1}, {y1}, {x2}, {y2}]: {reason}")]
    InvalidBox {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        reason: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{file}:{line}: parse error: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("{file}:{line}: field `{field}`: {message}")]
    Validation {
        file: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("referential integrity: {0}")]
    Referential(String),

    #[error("no lesions in ground truth: sensitivity undefined")]
    NoLesions,

    #[error("no ground-truth boxes: average precision undefined")]
    NoGroundTruthBoxes,

    #[error("synthetic generation infeasible: {0}")]
    SynthCapacity(String),

    #[error("volume error: {0}")]
    Volume(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
