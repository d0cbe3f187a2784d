//! The three segmentation backends behind one `segment` interface.

mod fcn8;
mod pix2pix;
mod segnet;

pub use fcn8::{coarse_grid_size, fcn8_spec, Fcn8};
pub use pix2pix::{patch_discriminator_spec, unet_generator_spec, PatchDiscriminator, UnetGenerator};
pub use segnet::{segnet_spec, SegNet};

use image::RgbImage;
use ndarray::{Array2, Array4};
use serde::{Deserialize, Serialize};

use crate::dataset::BinaryMask;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Which segmentation backend; fixes the input contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmenterKind {
    Fcn8,
    SegNet,
    Gan,
}

impl SegmenterKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SegmenterKind::Fcn8 => "fcn",
            SegmenterKind::SegNet => "segnet",
            SegmenterKind::Gan => "gan",
        }
    }
}

impl std::str::FromStr for SegmenterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fcn" | "fcn8" => Ok(SegmenterKind::Fcn8),
            "segnet" => Ok(SegmenterKind::SegNet),
            "gan" | "pix2pix" => Ok(SegmenterKind::Gan),
            other => Err(Error::Other(format!("unknown segmenter kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for SegmenterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-pixel sclera probability at network resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMask {
    pub width: u32,
    pub height: u32,
    /// `(height, width)`, values in `[0, 1]`.
    pub values: Array2<f64>,
}

impl ProbabilityMask {
    pub fn new(values: Array2<f64>) -> Self {
        let (h, w) = values.dim();
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        ProbabilityMask {
            width: w as u32,
            height: h as u32,
            values,
        }
    }
}

/// Thresholds a probability mask; a pixel is sclera iff probability >= t.
pub fn binarize(mask: &ProbabilityMask, threshold: f64) -> BinaryMask {
    assert!(
        threshold > 0.0 && threshold < 1.0,
        "threshold must lie in (0, 1)"
    );
    BinaryMask::from_fn(mask.width, mask.height, |x, y| {
        mask.values[[y as usize, x as usize]] >= threshold
    })
}

/// Converts an RGB image into a `(1, 3, h, w)` batch tensor with values
/// scaled into `[lo, hi]`.
pub fn image_to_tensor(image: &RgbImage, lo: f64, hi: f64) -> Tensor {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut x = Array4::zeros((1, 3, h, w));
    for (px, py, p) in image.enumerate_pixels() {
        for c in 0..3 {
            x[[0, c, py as usize, px as usize]] = lo + (hi - lo) * p.0[c] as f64 / 255.0;
        }
    }
    x
}

/// Common inference interface of the three backends.
pub trait Segmenter {
    fn kind(&self) -> SegmenterKind;

    /// Expected `(width, height)` of the input image.
    fn input_size(&self) -> (u32, u32) {
        crate::dataset::target_size_for(self.kind())
    }

    /// Probability mask at network resolution. The image must already be at
    /// the kind's input size.
    fn segment(&mut self, image: &RgbImage) -> Result<ProbabilityMask>;
}

pub(crate) fn check_input_size(kind: SegmenterKind, image: &RgbImage) -> Result<()> {
    let (w, h) = crate::dataset::target_size_for(kind);
    if (image.width(), image.height()) != (w, h) {
        return Err(Error::ShapeMismatch(format!(
            "{kind} expects {w}x{h} input, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

/// Sclera probability from a two-channel logit map (channel 1 = sclera).
pub(crate) fn probs_from_logits(logits: &Tensor) -> ProbabilityMask {
    let p = crate::nn::softmax2_probs(logits);
    let (_, h, w) = p.dim();
    ProbabilityMask::new(
        p.into_shape_with_order((h, w))
            .expect("single-item batch"),
    )
}

/// Collapses a 3-channel tanh generator output into one probability channel:
/// channel mean, rescaled from `[-1, 1]` to `[0, 1]`.
pub(crate) fn probs_from_tanh_rgb(out: &Tensor) -> ProbabilityMask {
    let (n, c, h, w) = out.dim();
    debug_assert_eq!((n, c), (1, 3));
    let mut v = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let mean = (out[[0, 0, i, j]] + out[[0, 1, i, j]] + out[[0, 2, i, j]]) / 3.0;
            v[[i, j]] = ((mean + 1.0) / 2.0).clamp(0.0, 1.0);
        }
    }
    ProbabilityMask::new(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_boundary_is_inclusive() {
        let m = ProbabilityMask::new(Array2::from_elem((4, 4), 0.5));
        let b = binarize(&m, 0.5);
        assert_eq!(b.count_true(), 16);
        let m0 = ProbabilityMask::new(Array2::zeros((4, 4)));
        assert_eq!(binarize(&m0, 0.5).count_true(), 0);
    }

    #[test]
    fn binarize_is_monotone_in_threshold() {
        let mut rng = crate::test_rng(23);
        let m = ProbabilityMask::new(Array2::from_shape_fn((8, 8), |_| {
            (crate::unit_rand(&mut rng) + 1.0) / 2.0
        }));
        let mut last = usize::MAX;
        for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let n = binarize(&m, t).count_true();
            assert!(n <= last);
            last = n;
        }
    }
}
