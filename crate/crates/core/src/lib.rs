//! Two-stage sclera segmentation pipeline.
//!
//! The pipeline first locates the periocular region with a single-class
//! Fast-YOLO detector, crops and pads the region of interest, then runs one of
//! three interchangeable segmentation backends (FCN8 over a VGG-16 trunk,
//! SegNet, or a pix2pix-style conditional GAN). Pixel-level precision, recall
//! and F-score are computed against ground-truth masks at original resolution,
//! with support for cross-sensor experiments and false-positive /
//! false-negative overlay rendering.

pub mod checkpoint;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod model_spec;
pub mod nn;
pub mod pipeline;
pub mod segmenters;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) fn test_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in [-1, 1); test helper.
#[cfg(test)]
pub(crate) fn unit_rand(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    use rand::Rng;
    rng.random::<f64>() * 2.0 - 1.0
}
