use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("box ({x1}, {y1}, {x2}, {y2}) lies outside the {width}x{height} frame")]
    BoxOutsideFrame { x1: f64, y1: f64, x2: f64, y2: f64, width: u32, height: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("video {0} has no annotated frames")]
    NoAnnotatedFrames(String),
    #[error("input {height}x{width} is not divisible by {multiple}; pad by ({pad_h}, {pad_w}) pixels")]
    NotDivisible { height: usize, width: usize, multiple: usize, pad_h: usize, pad_w: usize },
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("negative size {0} in localization loss")]
    NegativeSize(f64),
    #[error("empty precision-recall curve")]
    EmptyCurve,
    #[error("number of frames must be positive")]
    NoFrames,
    #[error("detections reference unknown video/frame: {0}")]
    UnknownReferences(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("json {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { context: context.into(), source }
    }
}
