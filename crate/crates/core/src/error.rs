use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite gradient in parameter {index}; optimizer step rejected")]
    NonFiniteGradient { index: usize },

    #[error("non-finite loss {value} ({loss}) at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        value: f64,
        loss: String,
        epoch: usize,
        batch: usize,
    },

    #[error("empty ground-truth mask: loss undefined")]
    EmptyGroundTruth,

    #[error("empty mask: {0}")]
    EmptyMask(&'static str),

    #[error("object too small ({width}x{height} px); at least 2x2 required")]
    ObjectTooSmall { width: usize, height: usize },

    #[error("no object: binarized prediction is empty")]
    NoObject,

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("degenerate bounding box: {width}x{height} px deduced from the extreme points")]
    DegenerateBox { width: usize, height: usize },

    #[error("degenerate contour: {0}")]
    DegenerateContour(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("model expects extreme points: network has {expected} input channels, data provides {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("dataset error for {sample}: {detail}")]
    Dataset { sample: String, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("image decode error: {0}")]
    Decode(#[source] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
