//! Pixel-level scoring against ground-truth masks at original resolution,
//! cross-sensor evaluation, error overlays and report rendering.

use std::collections::BTreeSet;

use image::{Rgb, RgbImage};

use crate::dataset::{BinaryMask, ImageSample, SensorTag};
use crate::error::{Error, Result};

/// Confusion counts over one image's pixels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PixelCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

/// Confusion counts of a predicted mask against the ground truth.
/// Both masks must share the same resolution.
pub fn pixel_counts(pred: &BinaryMask, gt: &BinaryMask) -> PixelCounts {
    assert_eq!(
        (pred.width(), pred.height()),
        (gt.width(), gt.height()),
        "mask resolutions"
    );
    let mut c = PixelCounts::default();
    for (&p, &g) in pred.pixels().iter().zip(gt.pixels()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Precision in [0, 1]. With no positive predictions the value is 1 when
/// nothing was missed and 0 otherwise, so an all-background prediction on an
/// all-background truth scores perfectly instead of dividing by zero.
pub fn precision(c: PixelCounts) -> f64 {
    if c.tp + c.fp == 0 {
        if c.fn_ == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    }
}

/// Recall in [0, 1]; the zero-denominator convention mirrors [`precision`].
pub fn recall(c: PixelCounts) -> f64 {
    if c.tp + c.fn_ == 0 {
        if c.fp == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_score(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Mean and population standard deviation, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

/// Summarizes per-image fractions into percent units.
pub fn summarize(values: &[f64]) -> Summary {
    assert!(!values.is_empty(), "summary of no values");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Summary {
        mean: mean * 100.0,
        std: var.sqrt() * 100.0,
    }
}

/// Fixed-width percent rendering: two decimals, half-up rounding, left
/// zero-padded to at least 5 characters (`08.19`, `87.48`, `100.00`).
pub fn format_metric(v: f64) -> String {
    let rounded = (v * 100.0 + 0.5).floor() / 100.0;
    format!("{rounded:05.2}")
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} \u{b1} {}",
            format_metric(self.mean),
            format_metric(self.std)
        )
    }
}

/// Per-image scores as fractions in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub id: String,
    pub counts: PixelCounts,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

#[derive(Debug, Clone)]
pub struct EvalResult {
    pub per_image: Vec<ImageMetrics>,
    pub precision: Summary,
    pub recall: Summary,
    /// Mean of the per-image F-scores (not the F of the mean P/R).
    pub f: Summary,
}

/// Anything that can produce a predicted mask at an image's original
/// resolution: the real two-stage pipeline, or a diagnostic stub.
pub trait MaskPredictor {
    fn name(&self) -> &str;
    fn predict(&mut self, sample: &ImageSample) -> Result<BinaryMask>;
}

/// Diagnostic stub that returns the ground-truth mask itself; a correct
/// scoring path must report exactly 100.00 across the board for it.
pub struct EchoGroundTruth;

impl MaskPredictor for EchoGroundTruth {
    fn name(&self) -> &str {
        "echo-gt"
    }

    fn predict(&mut self, sample: &ImageSample) -> Result<BinaryMask> {
        let path = sample
            .mask_path
            .as_ref()
            .ok_or_else(|| Error::Other(format!("sample `{}` has no mask", sample.id)))?;
        BinaryMask::load(path)
    }
}

/// Diagnostic stub predicting background everywhere.
pub struct AllBackground;

impl MaskPredictor for AllBackground {
    fn name(&self) -> &str {
        "all-background"
    }

    fn predict(&mut self, sample: &ImageSample) -> Result<BinaryMask> {
        Ok(BinaryMask::filled(
            sample.original_size.0,
            sample.original_size.1,
            false,
        ))
    }
}

/// Scores a predictor over every sample that has a ground-truth mask.
pub fn evaluate(samples: &[ImageSample], predictor: &mut dyn MaskPredictor) -> Result<EvalResult> {
    let mut per_image = Vec::new();
    for sample in samples {
        let Some(mask_path) = &sample.mask_path else {
            continue;
        };
        let gt = BinaryMask::load(mask_path)?;
        let pred = predictor.predict(sample)?;
        if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
            return Err(Error::ShapeMismatch(format!(
                "prediction for `{}` is {}x{}, ground truth is {}x{}",
                sample.id,
                pred.width(),
                pred.height(),
                gt.width(),
                gt.height()
            )));
        }
        let counts = pixel_counts(&pred, &gt);
        let p = precision(counts);
        let r = recall(counts);
        per_image.push(ImageMetrics {
            id: sample.id.clone(),
            counts,
            precision: p,
            recall: r,
            f: f_score(p, r),
        });
    }
    if per_image.is_empty() {
        return Err(Error::Other(
            "no samples with ground-truth masks to evaluate".into(),
        ));
    }
    let p: Vec<f64> = per_image.iter().map(|m| m.precision).collect();
    let r: Vec<f64> = per_image.iter().map(|m| m.recall).collect();
    let f: Vec<f64> = per_image.iter().map(|m| m.f).collect();
    Ok(EvalResult {
        precision: summarize(&p),
        recall: summarize(&r),
        f: summarize(&f),
        per_image,
    })
}

/// Refuses a cross-sensor experiment whose train and test sides share a
/// database (the protocol trains on one database and tests on the other).
pub fn check_databases_disjoint(train: &[SensorTag], test: &[SensorTag]) -> Result<()> {
    let train_dbs: BTreeSet<&str> = train.iter().map(|s| s.database()).collect();
    let overlap: Vec<String> = test
        .iter()
        .map(|s| s.database())
        .filter(|db| train_dbs.contains(db))
        .map(String::from)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(Error::OverlappingDatabases(overlap))
    }
}

/// Evaluates on `samples` after verifying that none of them comes from a
/// database seen in training.
pub fn cross_sensor_evaluate(
    train_sensors: &[SensorTag],
    samples: &[ImageSample],
    predictor: &mut dyn MaskPredictor,
) -> Result<EvalResult> {
    let test_sensors: Vec<SensorTag> = samples.iter().map(|s| s.sensor).collect();
    check_databases_disjoint(train_sensors, &test_sensors)?;
    evaluate(samples, predictor)
}

const FP_COLOR: Rgb<u8> = Rgb([0, 255, 0]);
const FN_COLOR: Rgb<u8> = Rgb([255, 0, 0]);

/// Paints prediction errors over the input: false positives pure green,
/// false negatives pure red. Any original pixel that happens to equal one of
/// the marker colors is nudged by one step so that counting pure-green /
/// pure-red pixels in the output recovers the FP / FN counts exactly.
pub fn render_error_overlay(image: &RgbImage, pred: &BinaryMask, gt: &BinaryMask) -> RgbImage {
    assert_eq!(
        (image.width(), image.height()),
        (gt.width(), gt.height()),
        "image/mask resolutions"
    );
    assert_eq!(
        (pred.width(), pred.height()),
        (gt.width(), gt.height()),
        "mask resolutions"
    );
    let mut out = image.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        match (pred.get(x, y), gt.get(x, y)) {
            (true, false) => *px = FP_COLOR,
            (false, true) => *px = FN_COLOR,
            _ => {
                if *px == FP_COLOR || *px == FN_COLOR {
                    px.0[1] = px.0[1].wrapping_sub(1);
                }
            }
        }
    }
    out
}

/// One line of a result table.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub label: String,
    pub precision: Summary,
    pub recall: Summary,
    pub f: Summary,
}

impl ReportRow {
    pub fn from_eval(label: impl Into<String>, eval: &EvalResult) -> Self {
        ReportRow {
            label: label.into(),
            precision: eval.precision,
            recall: eval.recall,
            f: eval.f,
        }
    }
}

/// Machine-readable report: one CSV row per experiment.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(
        "label,precision_mean,precision_std,recall_mean,recall_std,f_mean,f_std\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.label,
            format_metric(r.precision.mean),
            format_metric(r.precision.std),
            format_metric(r.recall.mean),
            format_metric(r.recall.std),
            format_metric(r.f.mean),
            format_metric(r.f.std),
        ));
    }
    out
}

/// Human-readable aligned table.
pub fn report_text(rows: &[ReportRow]) -> String {
    let label_w = rows
        .iter()
        .map(|r| r.label.len())
        .chain(std::iter::once("experiment".len()))
        .max()
        .unwrap_or(10);
    let mut out = format!(
        "{:label_w$}  {:>14}  {:>14}  {:>14}\n",
        "experiment", "precision", "recall", "f-score"
    );
    for r in rows {
        out.push_str(&format!(
            "{:label_w$}  {:>14}  {:>14}  {:>14}\n",
            r.label,
            r.precision.to_string(),
            r.recall.to_string(),
            r.f.to_string(),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from_bits(w: u32, h: u32, bits: &[u8]) -> BinaryMask {
        BinaryMask::new(w, h, bits.iter().map(|b| *b != 0).collect()).unwrap()
    }

    #[test]
    fn counts_on_a_small_pair() {
        let pred = mask_from_bits(2, 2, &[1, 1, 0, 0]);
        let gt = mask_from_bits(2, 2, &[1, 0, 1, 0]);
        let c = pixel_counts(&pred, &gt);
        assert_eq!(c, PixelCounts { tp: 1, fp: 1, fn_: 1, tn: 1 });
        assert_eq!(precision(c), 0.5);
        assert_eq!(recall(c), 0.5);
        assert_eq!(f_score(0.5, 0.5), 0.5);
    }

    #[test]
    fn zero_denominator_conventions() {
        // empty prediction, empty truth: perfect
        let empty = PixelCounts { tp: 0, fp: 0, fn_: 0, tn: 4 };
        assert_eq!(precision(empty), 1.0);
        assert_eq!(recall(empty), 1.0);
        assert_eq!(f_score(1.0, 1.0), 1.0);
        // empty prediction, non-empty truth
        let missed = PixelCounts { tp: 0, fp: 0, fn_: 3, tn: 1 };
        assert_eq!(precision(missed), 0.0);
        assert_eq!(recall(missed), 0.0);
        assert_eq!(f_score(0.0, 0.0), 0.0);
        // non-empty prediction, empty truth
        let spurious = PixelCounts { tp: 0, fp: 3, fn_: 0, tn: 1 };
        assert_eq!(precision(spurious), 0.0);
        assert_eq!(recall(spurious), 0.0);
    }

    #[test]
    fn summary_uses_population_std() {
        let s = summarize(&[0.8, 1.0]);
        assert!((s.mean - 90.0).abs() < 1e-9);
        assert!((s.std - 10.0).abs() < 1e-9);
        let exact = summarize(&[1.0, 1.0, 1.0]);
        assert_eq!(exact.to_string(), "100.00 \u{b1} 00.00");
    }

    #[test]
    fn metric_formatting_pads_and_rounds_half_up() {
        assert_eq!(format_metric(8.19), "08.19");
        assert_eq!(format_metric(87.475), "87.48");
        assert_eq!(format_metric(87.485), "87.49");
        assert_eq!(format_metric(100.0), "100.00");
        assert_eq!(format_metric(0.0), "00.00");
        assert_eq!(format_metric(99.999), "100.00");
    }

    #[test]
    fn overlay_marks_exact_error_pixels() {
        let w = 4;
        let h = 3;
        // image that already contains both marker colors
        let mut img = RgbImage::from_pixel(w, h, Rgb([10, 20, 30]));
        img.put_pixel(0, 0, Rgb([0, 255, 0]));
        img.put_pixel(1, 0, Rgb([255, 0, 0]));
        let pred = BinaryMask::from_fn(w, h, |x, _| x >= 2);
        let gt = BinaryMask::from_fn(w, h, |x, _| x >= 3);
        let out = render_error_overlay(&img, &pred, &gt);
        let greens = out.pixels().filter(|p| **p == Rgb([0, 255, 0])).count();
        let reds = out.pixels().filter(|p| **p == Rgb([255, 0, 0])).count();
        let c = pixel_counts(&pred, &gt);
        assert_eq!(greens as u64, c.fp);
        assert_eq!(reds as u64, c.fn_);
        assert_eq!(c.fp, 3);
        assert_eq!(c.fn_, 0);
    }

    #[test]
    fn database_overlap_is_refused() {
        use SensorTag::*;
        assert!(check_databases_disjoint(&[UbirisV2], &[MicheGs4, MicheIp5]).is_ok());
        assert!(check_databases_disjoint(&[MicheGt2], &[UbirisV2]).is_ok());
        let err = check_databases_disjoint(&[MicheGs4], &[MicheIp5]).unwrap_err();
        match err {
            Error::OverlappingDatabases(dbs) => assert_eq!(dbs, vec!["MICHE".to_string()]),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(check_databases_disjoint(&[UbirisV2], &[UbirisV2]).is_err());
    }

    #[test]
    fn report_rendering() {
        let rows = vec![ReportRow {
            label: "fcn/ubiris".into(),
            precision: Summary { mean: 87.48, std: 8.19 },
            recall: Summary { mean: 91.2, std: 4.05 },
            f: Summary { mean: 89.1, std: 5.5 },
        }];
        let csv = report_csv(&rows);
        assert!(csv.starts_with("label,precision_mean"));
        assert!(csv.contains("fcn/ubiris,87.48,08.19,91.20,04.05,89.10,05.50"));
        let text = report_text(&rows);
        assert!(text.contains("87.48 \u{b1} 08.19"));
    }
}
