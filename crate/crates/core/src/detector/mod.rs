//! Single-class periocular-region detector: Fast-YOLO architecture,
//! prediction decoding and the argmax selection / full-image fallback policy.

mod decode;
mod loss;
mod model;

pub use decode::{decode_predictions, encode_target, select_periocular, Detection};
pub use loss::{detector_loss, iou, DetectorLossWeights};
pub use model::{fast_yolo_spec, FastYolo};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five YOLOv2 VOC anchor priors, in grid units — the standard defaults
/// shipped with the reference framework; override via `DetectorConfig`.
pub const DEFAULT_ANCHORS: [(f64, f64); 5] = [
    (1.3221, 1.73145),
    (3.19275, 4.00944),
    (5.05587, 8.09892),
    (9.47112, 4.84053),
    (11.2364, 10.0071),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub input_size: usize,
    pub grid: usize,
    /// `(width, height)` priors in grid units.
    pub anchors: Vec<(f64, f64)>,
    pub classes: usize,
    pub confidence_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            input_size: 416,
            grid: 13,
            anchors: DEFAULT_ANCHORS.to_vec(),
            classes: 1,
            confidence_threshold: 0.25,
        }
    }
}

impl DetectorConfig {
    /// Final-layer filter count: anchors x (5 + classes).
    pub fn final_filters(&self) -> usize {
        self.anchors.len() * (5 + self.classes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(Error::ModelConfig("detector needs at least one anchor".into()));
        }
        if self.classes == 0 {
            return Err(Error::ModelConfig("detector needs at least one class".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::ModelConfig(format!(
                "confidence threshold {} outside [0, 1]",
                self.confidence_threshold
            )));
        }
        Ok(())
    }
}

/// Axis-aligned box in normalized image coordinates, center-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
}

impl BoundingBox {
    /// Clamps the box so it lies entirely inside the unit square.
    pub fn clamped(&self) -> BoundingBox {
        let x0 = (self.cx - self.w / 2.0).max(0.0);
        let y0 = (self.cy - self.h / 2.0).max(0.0);
        let x1 = (self.cx + self.w / 2.0).min(1.0);
        let y1 = (self.cy + self.h / 2.0).min(1.0);
        let w = (x1 - x0).max(0.0);
        let h = (y1 - y0).max(0.0);
        BoundingBox {
            cx: x0 + w / 2.0,
            cy: y0 + h / 2.0,
            w,
            h,
            confidence: self.confidence,
        }
    }
}

/// Reads a line-oriented annotation file: `id cx cy w h`, normalized,
/// whitespace separated. Exactly one box per image.
pub fn read_annotations(path: &Path) -> Result<BTreeMap<String, BoundingBox>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Other(format!(
                "{}:{}: expected `id cx cy w h`",
                path.display(),
                lineno + 1
            )));
        }
        let nums: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Other(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.insert(
            fields[0].to_string(),
            BoundingBox {
                cx: nums[0],
                cy: nums[1],
                w: nums[2],
                h: nums[3],
                confidence: 1.0,
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_filters_from_caption() {
        let mut cfg = DetectorConfig::default();
        assert_eq!(cfg.final_filters(), 30);
        cfg.classes = 20;
        assert_eq!(cfg.final_filters(), 125);
        cfg.classes = 1;
        cfg.anchors.truncate(3);
        assert_eq!(cfg.final_filters(), 18);
    }

    #[test]
    fn clamping_keeps_box_inside_image() {
        let b = BoundingBox {
            cx: 0.95,
            cy: 0.5,
            w: 0.3,
            h: 0.2,
            confidence: 0.9,
        };
        let c = b.clamped();
        assert!(c.cx + c.w / 2.0 <= 1.0 + 1e-12);
        assert!(c.cx - c.w / 2.0 >= -1e-12);
        assert!((c.h - b.h).abs() < 1e-12);
    }
}
