use ndarray::{Array3, Array4};

use super::Tensor;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-pixel two-class softmax probabilities from a `(n, 2, h, w)` logit map.
/// Returns the positive-class (channel 1) probability as `(n, h, w)`.
pub fn softmax2_probs(logits: &Tensor) -> Array3<f64> {
    let (n, c, h, w) = logits.dim();
    assert_eq!(c, 2, "two-class softmax head");
    Array3::from_shape_fn((n, h, w), |(ni, i, j)| {
        let a = logits[[ni, 0, i, j]];
        let b = logits[[ni, 1, i, j]];
        sigmoid(b - a)
    })
}

/// Mean per-pixel two-class cross-entropy with logits.
///
/// `target` holds the positive-class indicator (0.0 or 1.0) per pixel.
/// Returns the scalar loss and its gradient w.r.t. the logits.
pub fn softmax2_cross_entropy(logits: &Tensor, target: &Array3<f64>) -> (f64, Tensor) {
    let (n, c, h, w) = logits.dim();
    assert_eq!(c, 2, "two-class softmax head");
    assert_eq!(target.dim(), (n, h, w), "target shape");
    let count = (n * h * w) as f64;
    let mut grad = Array4::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for ni in 0..n {
        for i in 0..h {
            for j in 0..w {
                let a = logits[[ni, 0, i, j]];
                let b = logits[[ni, 1, i, j]];
                let t = target[[ni, i, j]];
                // log-sum-exp stabilized
                let m = a.max(b);
                let lse = m + ((a - m).exp() + (b - m).exp()).ln();
                loss += lse - if t > 0.5 { b } else { a };
                let p1 = sigmoid(b - a);
                let p0 = 1.0 - p1;
                grad[[ni, 0, i, j]] = (p0 - (1.0 - t)) / count;
                grad[[ni, 1, i, j]] = (p1 - t) / count;
            }
        }
    }
    (loss / count, grad)
}

/// Mean binary cross-entropy with logits against a constant or per-element
/// target. Returns the loss and the gradient w.r.t. the logits.
pub fn bce_with_logits(logits: &Tensor, target: &Tensor) -> (f64, Tensor) {
    assert_eq!(logits.dim(), target.dim(), "bce shapes");
    let count = logits.len() as f64;
    let mut grad = Array4::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (idx, (&x, &t)) in logits.iter().zip(target.iter()).enumerate() {
        // max(x,0) - x*t + ln(1 + exp(-|x|))
        loss += x.max(0.0) - x * t + (1.0 + (-x.abs()).exp()).ln();
        grad.as_slice_mut().unwrap()[idx] = (sigmoid(x) - t) / count;
    }
    (loss / count, grad)
}

/// Mean absolute error; returns the loss and the gradient w.r.t. `pred`.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> (f64, Tensor) {
    assert_eq!(pred.dim(), target.dim(), "l1 shapes");
    let count = pred.len() as f64;
    let mut grad = Array4::zeros(pred.raw_dim());
    let mut loss = 0.0;
    for ((g, &p), &t) in grad.iter_mut().zip(pred.iter()).zip(target.iter()) {
        let d = p - t;
        loss += d.abs();
        *g = d.signum() / count;
    }
    (loss / count, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn uniform_prediction_costs_ln2_per_pixel() {
        let logits = Tensor::zeros((1, 2, 4, 4));
        let target = Array3::zeros((1, 4, 4));
        let (loss, _) = softmax2_cross_entropy(&logits, &target);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn one_hot_prediction_saturates_to_zero_loss() {
        let mut logits = Tensor::zeros((1, 2, 2, 2));
        let mut target = Array3::zeros((1, 2, 2));
        target[[0, 0, 0]] = 1.0;
        for i in 0..2 {
            for j in 0..2 {
                let t = target[[0, i, j]];
                logits[[0, 1, i, j]] = if t > 0.5 { 40.0 } else { -40.0 };
                logits[[0, 0, i, j]] = if t > 0.5 { -40.0 } else { 40.0 };
            }
        }
        let (loss, _) = softmax2_cross_entropy(&logits, &target);
        assert!(loss < 1e-12);
    }

    #[test]
    fn cross_entropy_matches_brute_force() {
        let mut rng = crate::test_rng(11);
        let logits = Tensor::from_shape_fn((1, 2, 4, 4), |_| crate::unit_rand(&mut rng) * 3.0);
        let target = Array3::from_shape_fn((1, 4, 4), |_| {
            if crate::unit_rand(&mut rng) > 0.0 {
                1.0
            } else {
                0.0
            }
        });
        let (loss, _) = softmax2_cross_entropy(&logits, &target);
        // naive per-pixel softmax + NLL
        let mut expect = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let a: f64 = logits[[0, 0, i, j]];
                let b: f64 = logits[[0, 1, i, j]];
                let z = a.exp() + b.exp();
                let p = if target[[0, i, j]] > 0.5 {
                    b.exp() / z
                } else {
                    a.exp() / z
                };
                expect -= p.ln();
            }
        }
        expect /= 16.0;
        assert!((loss - expect).abs() < 1e-6);
    }

    #[test]
    fn bce_at_zero_logits_is_ln2() {
        let logits = Tensor::zeros((1, 1, 3, 3));
        let target = Tensor::ones((1, 1, 3, 3));
        let (loss, _) = bce_with_logits(&logits, &target);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
