use ndarray::Array3;

use crate::nn::sigmoid;

use super::{BoundingBox, DetectorConfig};

/// One decoded prediction, with its provenance in the prediction grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    /// `(row, col)` of the grid cell.
    pub cell: (usize, usize),
    pub anchor: usize,
}

/// Decodes a raw `(anchors*(5+classes), grid, grid)` head tensor into boxes.
///
/// Per cell and anchor: center from sigmoid offsets plus the cell index over
/// the grid size, extent from `anchor * exp(pred)`, confidence as
/// `sigmoid(objectness) * sigmoid(class)`. Detections below the confidence
/// threshold are dropped. Output order is row-major cell, then anchor.
pub fn decode_predictions(raw: &Array3<f64>, cfg: &DetectorConfig) -> Vec<Detection> {
    let grid = cfg.grid;
    let stride = 5 + cfg.classes;
    assert_eq!(
        raw.dim(),
        (cfg.anchors.len() * stride, grid, grid),
        "raw prediction tensor shape"
    );
    let mut out = Vec::new();
    for row in 0..grid {
        for col in 0..grid {
            for (a, &(aw, ah)) in cfg.anchors.iter().enumerate() {
                let base = a * stride;
                let tx = raw[[base, row, col]];
                let ty = raw[[base + 1, row, col]];
                let tw = raw[[base + 2, row, col]];
                let th = raw[[base + 3, row, col]];
                let to = raw[[base + 4, row, col]];
                // single class in this task, but decode stays generic
                let class_score = (0..cfg.classes)
                    .map(|c| sigmoid(raw[[base + 5 + c, row, col]]))
                    .fold(f64::MIN, f64::max);
                let confidence = sigmoid(to) * class_score;
                if confidence < cfg.confidence_threshold {
                    continue;
                }
                out.push(Detection {
                    bbox: BoundingBox {
                        cx: (col as f64 + sigmoid(tx)) / grid as f64,
                        cy: (row as f64 + sigmoid(ty)) / grid as f64,
                        w: aw * tw.min(20.0).exp() / grid as f64,
                        h: ah * th.min(20.0).exp() / grid as f64,
                        confidence,
                    },
                    cell: (row, col),
                    anchor: a,
                });
            }
        }
    }
    out
}

/// Keeps only the highest-confidence detection; ties resolve to the earlier
/// detection in decode order. An empty input yields `None`, in which case the
/// caller segments the full image.
pub fn select_periocular(detections: &[Detection]) -> Option<BoundingBox> {
    let mut best: Option<&Detection> = None;
    for d in detections {
        match best {
            Some(b) if d.bbox.confidence <= b.bbox.confidence => {}
            _ => best = Some(d),
        }
    }
    best.map(|d| d.bbox)
}

/// Encodes a ground-truth box into its responsible cell/anchor target values:
/// `(row, col, anchor, [sx, sy, tw, th])` where `sx`/`sy` are the sigmoid-space
/// center offsets in `[0, 1]` and `tw`/`th` are log-space extents.
pub fn encode_target(gt: &BoundingBox, cfg: &DetectorConfig) -> (usize, usize, usize, [f64; 4]) {
    let grid = cfg.grid as f64;
    let col = ((gt.cx * grid).floor() as usize).min(cfg.grid - 1);
    let row = ((gt.cy * grid).floor() as usize).min(cfg.grid - 1);
    let gw = gt.w * grid;
    let gh = gt.h * grid;
    // responsible anchor: best shape-only IoU against the priors
    let mut best_a = 0;
    let mut best_iou = -1.0;
    for (a, &(aw, ah)) in cfg.anchors.iter().enumerate() {
        let inter = gw.min(aw) * gh.min(ah);
        let union = gw * gh + aw * ah - inter;
        let iou = inter / union;
        if iou > best_iou {
            best_iou = iou;
            best_a = a;
        }
    }
    let (aw, ah) = cfg.anchors[best_a];
    let sx = gt.cx * grid - col as f64;
    let sy = gt.cy * grid - row as f64;
    (row, col, best_a, [sx, sy, (gw / aw).ln(), (gh / ah).ln()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn all_negative_objectness_yields_nothing() {
        let cfg = DetectorConfig::default();
        let raw = Array3::from_elem((30, 13, 13), -40.0);
        assert!(decode_predictions(&raw, &cfg).is_empty());
    }

    #[test]
    fn zero_offsets_center_on_the_cell() {
        let cfg = DetectorConfig::default();
        let mut raw = Array3::zeros((30, 13, 13));
        // anchor 0 at cell (6,6): objectness and class confident
        raw[[4, 6, 6]] = 40.0;
        raw[[5, 6, 6]] = 40.0;
        // suppress every other cell/anchor
        for row in 0..13 {
            for col in 0..13 {
                for a in 0..5 {
                    if (row, col, a) != (6, 6, 0) {
                        raw[[a * 6 + 4, row, col]] = -40.0;
                    }
                }
            }
        }
        let dets = decode_predictions(&raw, &cfg);
        assert_eq!(dets.len(), 1);
        let b = dets[0].bbox;
        assert!((b.cx - 6.5 / 13.0).abs() < 1e-12);
        assert!((b.cy - 6.5 / 13.0).abs() < 1e-12);
        assert!((b.w - cfg.anchors[0].0 / 13.0).abs() < 1e-12);
        assert!((b.h - cfg.anchors[0].1 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_selection_and_tie_break() {
        assert_eq!(select_periocular(&[]), None);
        let mk = |conf: f64, cell: (usize, usize)| Detection {
            bbox: BoundingBox {
                cx: 0.5,
                cy: 0.5,
                w: 0.1,
                h: 0.1,
                confidence: conf,
            },
            cell,
            anchor: 0,
        };
        let picked = select_periocular(&[mk(0.3, (0, 0)), mk(0.9, (1, 1))]).unwrap();
        assert_eq!(picked.confidence, 0.9);
        // exact tie: earlier decode order wins
        let tied = [mk(0.7, (2, 3)), mk(0.7, (5, 5))];
        let picked = select_periocular(&tied).unwrap();
        assert_eq!(picked, tied[0].bbox);
    }

    #[test]
    fn encode_decode_round_trip() {
        let cfg = DetectorConfig::default();
        let gt = BoundingBox {
            cx: 0.37,
            cy: 0.62,
            w: 0.25,
            h: 0.33,
            confidence: 1.0,
        };
        let (row, col, a, t) = encode_target(&gt, &cfg);
        let mut raw = Array3::from_elem((30, 13, 13), -40.0);
        let base = a * 6;
        raw[[base, row, col]] = logit(t[0]);
        raw[[base + 1, row, col]] = logit(t[1]);
        raw[[base + 2, row, col]] = t[2];
        raw[[base + 3, row, col]] = t[3];
        raw[[base + 4, row, col]] = 40.0;
        raw[[base + 5, row, col]] = 40.0;
        // the other anchors of that cell keep objectness low already
        let dets = decode_predictions(&raw, &cfg);
        assert_eq!(dets.len(), 1);
        let b = dets[0].bbox;
        assert!((b.cx - gt.cx).abs() < 1e-6);
        assert!((b.cy - gt.cy).abs() < 1e-6);
        assert!((b.w - gt.w).abs() < 1e-6);
        assert!((b.h - gt.h).abs() < 1e-6);
    }

    #[test]
    fn threshold_monotonicity() {
        let mut rng = crate::test_rng(5);
        let raw = Array3::from_shape_fn((30, 13, 13), |_| crate::unit_rand(&mut rng) * 4.0);
        let mut last = usize::MAX;
        for i in 0..10 {
            let cfg = DetectorConfig {
                confidence_threshold: i as f64 / 10.0,
                ..DetectorConfig::default()
            };
            let n = decode_predictions(&raw, &cfg).len();
            assert!(n <= last);
            last = n;
        }
    }
}
