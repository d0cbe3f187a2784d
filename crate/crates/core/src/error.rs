use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset root does not exist: {0}")]
    MissingRoot(PathBuf),
    #[error("invalid layout descriptor: {0}")]
    Layout(String),
    #[error("mask/image size mismatch for sample `{id}`: image {image_w}x{image_h}, mask {mask_w}x{mask_h}")]
    MaskSizeMismatch {
        id: String,
        image_w: u32,
        image_h: u32,
        mask_w: u32,
        mask_h: u32,
    },
    #[error("split ratios {0:?} do not sum to 1")]
    BadRatios([f64; 3]),
    #[error("need at least 3 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model configuration: {0}")]
    ModelConfig(String),
    #[error("inconsistent ROI transform: {0}")]
    BadTransform(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("training aborted: {0}")]
    TrainingAborted(String),
    #[error("train and test databases overlap: {0:?}")]
    OverlappingDatabases(Vec<String>),
    #[error("no region of interest")]
    NoRoi,
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
