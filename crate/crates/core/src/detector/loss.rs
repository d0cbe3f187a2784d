use ndarray::Array4;

use crate::nn::{sigmoid, Tensor};

use super::{encode_target, BoundingBox, DetectorConfig};

/// YOLO-style loss weights.
#[derive(Debug, Clone, Copy)]
pub struct DetectorLossWeights {
    pub coord: f64,
    pub noobj: f64,
}

impl Default for DetectorLossWeights {
    fn default() -> Self {
        DetectorLossWeights {
            coord: 5.0,
            noobj: 0.5,
        }
    }
}

/// Intersection-over-union of two normalized boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let x0 = (a.cx - a.w / 2.0).max(b.cx - b.w / 2.0);
    let y0 = (a.cy - a.h / 2.0).max(b.cy - b.h / 2.0);
    let x1 = (a.cx + a.w / 2.0).min(b.cx + b.w / 2.0);
    let y1 = (a.cy + a.h / 2.0).min(b.cy + b.h / 2.0);
    let inter = (x1 - x0).max(0.0) * (y1 - y0).max(0.0);
    let union = a.w * a.h + b.w * b.h - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Sum-of-squares detection loss over a batch with exactly one ground-truth
/// box per image.
///
/// The anchor with the best shape IoU in the ground-truth cell is responsible:
/// it takes weighted coordinate terms, an objectness-to-one term and the
/// (single-class) class term. Every other predictor takes a down-weighted
/// no-object term. Returns the batch-mean loss and its gradient w.r.t. the
/// raw head tensor.
pub fn detector_loss(
    raw: &Tensor,
    gts: &[BoundingBox],
    cfg: &DetectorConfig,
    weights: DetectorLossWeights,
) -> (f64, Tensor) {
    let (n, c, gh, gw) = raw.dim();
    let stride = 5 + cfg.classes;
    assert_eq!(c, cfg.anchors.len() * stride, "head channels");
    assert_eq!((gh, gw), (cfg.grid, cfg.grid), "grid size");
    assert_eq!(n, gts.len(), "one ground-truth box per image");

    let mut grad = Array4::zeros(raw.raw_dim());
    let mut loss = 0.0;
    let scale = 1.0 / n as f64;
    for (ni, gt) in gts.iter().enumerate() {
        let (grow, gcol, ga, target) = encode_target(gt, cfg);
        for row in 0..cfg.grid {
            for col in 0..cfg.grid {
                for a in 0..cfg.anchors.len() {
                    let base = a * stride;
                    let to = raw[[ni, base + 4, row, col]];
                    let so = sigmoid(to);
                    if (row, col, a) == (grow, gcol, ga) {
                        // coordinates
                        let tx = raw[[ni, base, row, col]];
                        let ty = raw[[ni, base + 1, row, col]];
                        let tw = raw[[ni, base + 2, row, col]];
                        let th = raw[[ni, base + 3, row, col]];
                        let sx = sigmoid(tx);
                        let sy = sigmoid(ty);
                        loss += weights.coord
                            * ((sx - target[0]).powi(2)
                                + (sy - target[1]).powi(2)
                                + (tw - target[2]).powi(2)
                                + (th - target[3]).powi(2))
                            * scale;
                        grad[[ni, base, row, col]] =
                            weights.coord * 2.0 * (sx - target[0]) * sx * (1.0 - sx) * scale;
                        grad[[ni, base + 1, row, col]] =
                            weights.coord * 2.0 * (sy - target[1]) * sy * (1.0 - sy) * scale;
                        grad[[ni, base + 2, row, col]] =
                            weights.coord * 2.0 * (tw - target[2]) * scale;
                        grad[[ni, base + 3, row, col]] =
                            weights.coord * 2.0 * (th - target[3]) * scale;
                        // objectness toward 1
                        loss += (so - 1.0).powi(2) * scale;
                        grad[[ni, base + 4, row, col]] =
                            2.0 * (so - 1.0) * so * (1.0 - so) * scale;
                        // class term (single class)
                        for cl in 0..cfg.classes {
                            let tc = raw[[ni, base + 5 + cl, row, col]];
                            let sc = sigmoid(tc);
                            loss += (sc - 1.0).powi(2) * scale;
                            grad[[ni, base + 5 + cl, row, col]] =
                                2.0 * (sc - 1.0) * sc * (1.0 - sc) * scale;
                        }
                    } else {
                        loss += weights.noobj * so * so * scale;
                        grad[[ni, base + 4, row, col]] =
                            weights.noobj * 2.0 * so * so * (1.0 - so) * scale;
                    }
                }
            }
        }
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    fn gt_box() -> BoundingBox {
        BoundingBox {
            cx: 0.42,
            cy: 0.58,
            w: 0.3,
            h: 0.25,
            confidence: 1.0,
        }
    }

    fn perfect_raw(cfg: &DetectorConfig, gt: &BoundingBox) -> Tensor {
        let (row, col, a, t) = encode_target(gt, cfg);
        let mut raw = Array4::from_elem((1, 30, 13, 13), 0.0);
        // objectness ~0 everywhere
        for r in 0..13 {
            for c in 0..13 {
                for an in 0..5 {
                    raw[[0, an * 6 + 4, r, c]] = -50.0;
                }
            }
        }
        let base = a * 6;
        raw[[0, base, row, col]] = logit(t[0]);
        raw[[0, base + 1, row, col]] = logit(t[1]);
        raw[[0, base + 2, row, col]] = t[2];
        raw[[0, base + 3, row, col]] = t[3];
        raw[[0, base + 4, row, col]] = 50.0;
        raw[[0, base + 5, row, col]] = 50.0;
        raw
    }

    #[test]
    fn perfect_prediction_has_vanishing_loss() {
        let cfg = DetectorConfig::default();
        let gt = gt_box();
        let raw = perfect_raw(&cfg, &gt);
        let (loss, _) = detector_loss(&raw, &[gt], &cfg, DetectorLossWeights::default());
        assert!(loss < 1e-12, "loss = {loss}");
    }

    #[test]
    fn doubling_coordinate_error_quadruples_the_coord_term() {
        let cfg = DetectorConfig::default();
        let gt = gt_box();
        let base_raw = perfect_raw(&cfg, &gt);
        let (l0, _) = detector_loss(&base_raw, &[gt], &cfg, DetectorLossWeights::default());
        let (row, col, a, t) = encode_target(&gt, &cfg);
        let mut raw1 = base_raw.clone();
        raw1[[0, a * 6 + 2, row, col]] = t[2] + 0.1;
        let (l1, _) = detector_loss(&raw1, &[gt], &cfg, DetectorLossWeights::default());
        let mut raw2 = base_raw.clone();
        raw2[[0, a * 6 + 2, row, col]] = t[2] + 0.2;
        let (l2, _) = detector_loss(&raw2, &[gt], &cfg, DetectorLossWeights::default());
        assert!(((l2 - l0) / (l1 - l0) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let cfg = DetectorConfig::default();
        let gt = gt_box();
        let mut rng = crate::test_rng(17);
        let raw = Array4::from_shape_fn((2, 30, 13, 13), |_| crate::unit_rand(&mut rng));
        let gts = [gt, gt_box()];
        let w = DetectorLossWeights::default();
        let (_, grad) = detector_loss(&raw, &gts, &cfg, w);
        let eps = 1e-6;
        for probe in [(0usize, 0usize, 6usize, 6usize), (1, 10, 3, 9), (0, 17, 12, 0)] {
            let mut plus = raw.clone();
            plus[[probe.0, probe.1, probe.2, probe.3]] += eps;
            let mut minus = raw.clone();
            minus[[probe.0, probe.1, probe.2, probe.3]] -= eps;
            let (lp, _) = detector_loss(&plus, &gts, &cfg, w);
            let (lm, _) = detector_loss(&minus, &gts, &cfg, w);
            let numeric = (lp - lm) / (2.0 * eps);
            let analytic = grad[[probe.0, probe.1, probe.2, probe.3]];
            assert!(
                (numeric - analytic).abs() <= 1e-6 * (1.0 + numeric.abs().max(analytic.abs())),
                "probe {probe:?}: numeric {numeric} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn iou_basics() {
        let a = gt_box();
        assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        let far = BoundingBox {
            cx: 0.9,
            cy: 0.9,
            w: 0.05,
            h: 0.05,
            confidence: 1.0,
        };
        assert_eq!(iou(&a, &far), 0.0);
    }
}
