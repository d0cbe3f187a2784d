//! The end-to-end two-stage pipeline: periocular detection, ROI crop with
//! padding, segmentation at network resolution, and mapping the mask back
//! into the original image frame. Also hosts the checkpoint-backed model
//! constructors used by the command-line tools.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::RgbImage;
use ndarray::Axis;

use crate::checkpoint;
use crate::dataset::{
    crop_roi, map_mask_to_original, resize_for, BinaryMask, ImageSample, PaddingPolicy,
    RoiTransform,
};
use crate::detector::{decode_predictions, select_periocular, DetectorConfig, FastYolo};
use crate::error::{Error, Result};
use crate::evaluation::MaskPredictor;
use crate::segmenters::{binarize, Fcn8, SegNet, Segmenter, SegmenterKind, UnetGenerator};

/// Default binarization threshold on the probability mask.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Stage one + stage two, wired together.
pub struct ScleraPipeline {
    /// Without a detector the full image is treated as the ROI.
    pub detector: Option<FastYolo>,
    pub segmenter: Box<dyn Segmenter>,
    pub padding: PaddingPolicy,
    pub threshold: f64,
}

impl ScleraPipeline {
    pub fn new(detector: Option<FastYolo>, segmenter: Box<dyn Segmenter>) -> Self {
        ScleraPipeline {
            detector,
            segmenter,
            padding: PaddingPolicy::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }

    /// Runs the detector (when present) and returns the padded ROI crop with
    /// its transform. Falls back to the full image when nothing is detected.
    fn locate_roi(&mut self, image: &RgbImage) -> Result<(RgbImage, RoiTransform)> {
        let Some(det) = &mut self.detector else {
            return Ok((
                image.clone(),
                RoiTransform::identity(image.width(), image.height()),
            ));
        };
        let s = det.cfg.input_size as u32;
        let resized = if (image.width(), image.height()) == (s, s) {
            image.clone()
        } else {
            imageops::resize(image, s, s, FilterType::Triangle)
        };
        let x = crate::segmenters::image_to_tensor(&resized, 0.0, 1.0);
        let raw = det.forward(x);
        let raw_3 = raw.index_axis(Axis(0), 0).to_owned();
        let dets = decode_predictions(&raw_3, &det.cfg);
        match select_periocular(&dets) {
            Some(bbox) => crop_roi(image, &bbox.clamped(), self.padding),
            None => Ok((
                image.clone(),
                RoiTransform::identity(image.width(), image.height()),
            )),
        }
    }

    /// Binary sclera mask at the original resolution of `image`.
    pub fn segment_image(&mut self, image: &RgbImage) -> Result<BinaryMask> {
        let (roi, transform) = self.locate_roi(image)?;
        let (net_input, _, transform) =
            resize_for(self.segmenter.kind(), &roi, None, Some(transform));
        let probs = self.segmenter.segment(&net_input)?;
        let mask = binarize(&probs, self.threshold);
        map_mask_to_original(&mask, &transform, (image.width(), image.height()))
    }
}

impl MaskPredictor for ScleraPipeline {
    fn name(&self) -> &str {
        self.segmenter.kind().as_str()
    }

    fn predict(&mut self, sample: &ImageSample) -> Result<BinaryMask> {
        let image = image::open(&sample.image_path)?.into_rgb8();
        self.segment_image(&image)
    }
}

/// Configuration stored in segmenter checkpoints.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct SegmenterCheckpointConfig {
    pub width_divisor: usize,
    /// Generator input size; ignored by the logit-map segmenters.
    #[serde(default)]
    pub input_size: Option<u32>,
}

/// Checkpoint model tag per segmenter kind.
pub fn segmenter_tag(kind: SegmenterKind) -> &'static str {
    match kind {
        SegmenterKind::Fcn8 => "fcn",
        SegmenterKind::SegNet => "segnet",
        SegmenterKind::Gan => "gan-generator",
    }
}

/// Saves a trained segmenter.
pub fn save_segmenter(
    path: &Path,
    kind: SegmenterKind,
    width_divisor: usize,
    input_size: Option<u32>,
    net: &mut dyn crate::nn::Trainable,
) -> Result<()> {
    let cfg = SegmenterCheckpointConfig {
        width_divisor,
        input_size,
    };
    let value = serde_json::to_value(&cfg)
        .map_err(|e| Error::Checkpoint(format!("config encode: {e}")))?;
    checkpoint::save(path, segmenter_tag(kind), value, net)
}

/// Rebuilds a segmenter of the given kind from its checkpoint.
pub fn load_segmenter(path: &Path, kind: SegmenterKind) -> Result<Box<dyn Segmenter>> {
    let header = checkpoint::read_header(path)?;
    let cfg: SegmenterCheckpointConfig = serde_json::from_value(header.config)
        .map_err(|e| Error::Checkpoint(format!("config decode: {e}")))?;
    match kind {
        SegmenterKind::Fcn8 => {
            let mut net = Fcn8::new(cfg.width_divisor, 0);
            checkpoint::load_into(path, segmenter_tag(kind), &mut net)?;
            Ok(Box::new(net))
        }
        SegmenterKind::SegNet => {
            let mut net = SegNet::new(cfg.width_divisor, 0);
            checkpoint::load_into(path, segmenter_tag(kind), &mut net)?;
            Ok(Box::new(net))
        }
        SegmenterKind::Gan => {
            let size = cfg.input_size.unwrap_or(256);
            let mut net = UnetGenerator::new(size, cfg.width_divisor, 0);
            checkpoint::load_into(path, segmenter_tag(kind), &mut net)?;
            Ok(Box::new(net))
        }
    }
}

/// Configuration stored in detector checkpoints.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct DetectorCheckpointConfig {
    pub detector: DetectorConfig,
    pub width_divisor: usize,
}

pub const DETECTOR_TAG: &str = "fast-yolo";

pub fn save_detector(path: &Path, net: &mut FastYolo) -> Result<()> {
    let cfg = DetectorCheckpointConfig {
        detector: net.cfg.clone(),
        width_divisor: net.width_divisor,
    };
    let value = serde_json::to_value(&cfg)
        .map_err(|e| Error::Checkpoint(format!("config encode: {e}")))?;
    checkpoint::save(path, DETECTOR_TAG, value, net)
}

pub fn load_detector(path: &Path) -> Result<FastYolo> {
    let header = checkpoint::read_header(path)?;
    let cfg: DetectorCheckpointConfig = serde_json::from_value(header.config)
        .map_err(|e| Error::Checkpoint(format!("config decode: {e}")))?;
    let mut net = FastYolo::new(cfg.detector, cfg.width_divisor, 0)?;
    checkpoint::load_into(path, DETECTOR_TAG, &mut net)?;
    Ok(net)
}
