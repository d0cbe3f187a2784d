//! Command-line front end for the two-stage sclera segmentation pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/configuration error,
//! 3 numerical failure during training.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::Axis;
use serde::Deserialize;

use sclera_core::dataset::{
    self, load_dataset, make_splits, read_manifest, read_split_file, write_manifest,
    write_split_file, BinaryMask, ImageSample, LayoutConfig, Manifest, PaddingPolicy, SensorTag,
    SPLIT_RATIOS,
};
use sclera_core::detector::{
    fast_yolo_spec, read_annotations, DetectorConfig, DetectorLossWeights, FastYolo,
};
use sclera_core::evaluation::{
    cross_sensor_evaluate, evaluate, render_error_overlay, report_csv, report_text, AllBackground,
    EchoGroundTruth, EvalResult, MaskPredictor, ReportRow, Summary,
};
use sclera_core::pipeline::{
    load_detector, load_segmenter, save_detector, save_segmenter, ScleraPipeline,
    DEFAULT_THRESHOLD,
};
use sclera_core::segmenters::{
    fcn8_spec, image_to_tensor, patch_discriminator_spec, segnet_spec, unet_generator_spec, Fcn8,
    PatchDiscriminator, SegNet, SegmenterKind, UnetGenerator,
};
use sclera_core::training::{
    train_detector, train_gan, train_segmenter, DetSample, GanSample, GanTrainConfig, SegSample,
    TrainConfig,
};
use sclera_core::Error;

#[derive(Parser)]
#[command(
    name = "sclera",
    version,
    about = "Two-stage sclera segmentation: periocular detection, ROI crop, segmentation"
)]
struct Cli {
    /// TOML file with default values for training/evaluation flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for tensor kernels (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scan a dataset directory into a manifest file.
    Ingest {
        /// Dataset root directory.
        #[arg(long)]
        root: PathBuf,
        /// Layout rules (TOML). Without it a single flat rule is used.
        #[arg(long)]
        layout: Option<PathBuf>,
        /// Sensor tag for the flat layout.
        #[arg(long, default_value = "ubiris_v2")]
        sensor: String,
        /// Mask stem suffix for the flat layout.
        #[arg(long, default_value = "_mask")]
        mask_suffix: String,
        /// Output manifest path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition a manifest 40/20/40 into train/validation/test.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Shuffle seed; required so splits are reproducible by construction.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the periocular detector.
    TrainDetector {
        #[arg(long)]
        manifest: PathBuf,
        /// Ground-truth boxes: `id cx cy w h` per line, normalized.
        #[arg(long)]
        annotations: PathBuf,
        /// Restrict to the train rows of this split file.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Divides every hidden channel count (1 = full-scale network).
        #[arg(long)]
        width_divisor: Option<usize>,
        /// Stop early once mean training IoU reaches this value.
        #[arg(long)]
        target_iou: Option<f64>,
    },
    /// Train a segmentation backend.
    TrainSeg {
        /// Backend: fcn, segnet or gan.
        #[arg(long, value_parser = ["fcn", "segnet", "gan"])]
        kind: String,
        #[arg(long)]
        manifest: PathBuf,
        /// Restrict to the train rows of this split file.
        #[arg(long)]
        split: Option<PathBuf>,
        /// Optional boxes used to crop training ROIs around the eye.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        width_divisor: Option<usize>,
        /// GAN only: weight of the L1 reconstruction term.
        #[arg(long)]
        lambda_l1: Option<f64>,
        /// Stop early once mean training F-score reaches this value.
        #[arg(long)]
        target_f: Option<f64>,
    },
    /// Segment one image and write the binary mask.
    Segment {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_parser = ["fcn", "segnet", "gan"])]
        kind: String,
        /// Detector checkpoint; without it the full image is the ROI.
        #[arg(long)]
        detector: Option<PathBuf>,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Score a model (or a diagnostic stub) over a manifest.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Restrict to one subset of this split file.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "test", value_parser = ["train", "validation", "test"])]
        subset: String,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_parser = ["fcn", "segnet", "gan"])]
        kind: Option<String>,
        #[arg(long)]
        detector: Option<PathBuf>,
        /// Diagnostic predictor instead of a model.
        #[arg(long, value_parser = ["echo-gt", "all-background"])]
        stub: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Row label in reports (defaults to the predictor name).
        #[arg(long)]
        label: Option<String>,
        /// Append a CSV row to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate across databases, refusing train/test database overlap.
    CrossEval {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated sensor tags the model was trained on.
        #[arg(long, value_delimiter = ',')]
        train_sensors: Vec<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_parser = ["fcn", "segnet", "gan"])]
        kind: Option<String>,
        #[arg(long)]
        detector: Option<PathBuf>,
        #[arg(long, value_parser = ["echo-gt", "all-background"])]
        stub: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Paint false positives (green) and false negatives (red) over an image.
    Overlay {
        #[arg(long)]
        image: PathBuf,
        /// Predicted mask (grayscale, >= 128 is sclera).
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth mask.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render evaluation CSV files as one aligned text table.
    Report {
        /// CSV files produced by `evaluate` / `cross-eval`.
        #[arg(long, required = true, num_args = 1..)]
        csv: Vec<PathBuf>,
        /// Also write the table here instead of only stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a network's layer table.
    DescribeModel {
        #[arg(long, value_parser = ["fast-yolo", "fcn", "segnet", "gan-generator", "gan-discriminator"])]
        model: String,
        #[arg(long)]
        width_divisor: Option<usize>,
    },
}

/// Optional defaults, loaded from `--config`; explicit flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    seed: Option<u64>,
    width_divisor: Option<usize>,
    threshold: Option<f64>,
    lambda_l1: Option<f64>,
    jobs: Option<usize>,
    padding_x: Option<f64>,
    padding_y: Option<f64>,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<Self, Error> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| Error::Other(format!("{}: {e}", p.display())))
            }
        }
    }

    fn padding(&self) -> PaddingPolicy {
        let d = PaddingPolicy::default();
        PaddingPolicy {
            x_factor: self.padding_x.unwrap_or(d.x_factor),
            y_factor: self.padding_y.unwrap_or(d.y_factor),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::TrainingAborted(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let cfg = match RunConfig::load(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(jobs) = cli.jobs.or(cfg.jobs) {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: could not size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.cmd, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Cmd, cfg: &RunConfig) -> Result<(), Error> {
    match cmd {
        Cmd::Ingest {
            root,
            layout,
            sensor,
            mask_suffix,
            out,
        } => cmd_ingest(&root, layout.as_deref(), &sensor, &mask_suffix, &out),
        Cmd::Split {
            manifest,
            seed,
            out,
        } => cmd_split(&manifest, seed, &out),
        Cmd::TrainDetector {
            manifest,
            annotations,
            split,
            out,
            epochs,
            lr,
            batch_size,
            seed,
            width_divisor,
            target_iou,
        } => cmd_train_detector(
            &manifest,
            &annotations,
            split.as_deref(),
            &out,
            TrainConfig {
                epochs: epochs.or(cfg.epochs).unwrap_or(200),
                lr: lr.or(cfg.lr).unwrap_or(1e-3),
                batch_size: batch_size.or(cfg.batch_size).unwrap_or(1),
                seed: seed.or(cfg.seed).unwrap_or(0),
                clip_norm: Some(10.0),
                target_metric: target_iou,
            },
            width_divisor.or(cfg.width_divisor).unwrap_or(1),
        ),
        Cmd::TrainSeg {
            kind,
            manifest,
            split,
            annotations,
            out,
            epochs,
            lr,
            batch_size,
            seed,
            width_divisor,
            lambda_l1,
            target_f,
        } => cmd_train_seg(
            kind.parse().expect("validated by clap"),
            &manifest,
            split.as_deref(),
            annotations.as_deref(),
            &out,
            TrainConfig {
                epochs: epochs.or(cfg.epochs).unwrap_or(100),
                lr: lr.or(cfg.lr).unwrap_or(1e-3),
                batch_size: batch_size.or(cfg.batch_size).unwrap_or(1),
                seed: seed.or(cfg.seed).unwrap_or(0),
                clip_norm: Some(10.0),
                target_metric: target_f,
            },
            width_divisor.or(cfg.width_divisor).unwrap_or(1),
            lambda_l1.or(cfg.lambda_l1).unwrap_or(100.0),
            cfg.padding(),
        ),
        Cmd::Segment {
            model,
            kind,
            detector,
            image,
            out,
            threshold,
        } => cmd_segment(
            &model,
            kind.parse().expect("validated by clap"),
            detector.as_deref(),
            &image,
            &out,
            threshold.or(cfg.threshold).unwrap_or(DEFAULT_THRESHOLD),
            cfg.padding(),
        ),
        Cmd::Evaluate {
            manifest,
            split,
            subset,
            model,
            kind,
            detector,
            stub,
            threshold,
            label,
            csv,
        } => {
            let samples = select_samples(&manifest, split.as_deref(), &subset)?;
            let mut predictor = build_predictor(
                model.as_deref(),
                kind.as_deref(),
                detector.as_deref(),
                stub.as_deref(),
                threshold.or(cfg.threshold).unwrap_or(DEFAULT_THRESHOLD),
                cfg.padding(),
            )?;
            let result = evaluate(&samples, predictor.as_mut())?;
            finish_eval(&result, label.as_deref(), predictor.name(), csv.as_deref())
        }
        Cmd::CrossEval {
            manifest,
            train_sensors,
            model,
            kind,
            detector,
            stub,
            threshold,
            label,
            csv,
        } => {
            let samples = read_manifest(&manifest)?;
            let train: Vec<SensorTag> = train_sensors
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_, _>>()?;
            let mut predictor = build_predictor(
                model.as_deref(),
                kind.as_deref(),
                detector.as_deref(),
                stub.as_deref(),
                threshold.or(cfg.threshold).unwrap_or(DEFAULT_THRESHOLD),
                cfg.padding(),
            )?;
            let result = cross_sensor_evaluate(&train, &samples, predictor.as_mut())?;
            finish_eval(&result, label.as_deref(), predictor.name(), csv.as_deref())
        }
        Cmd::Overlay {
            image,
            pred,
            gt,
            out,
        } => cmd_overlay(&image, &pred, &gt, &out),
        Cmd::Report { csv, out } => cmd_report(&csv, out.as_deref()),
        Cmd::DescribeModel {
            model,
            width_divisor,
        } => {
            let d = width_divisor.or(cfg.width_divisor).unwrap_or(1);
            let spec = match model.as_str() {
                "fast-yolo" => fast_yolo_spec(&DetectorConfig::default(), d),
                "fcn" => fcn8_spec(d),
                "segnet" => segnet_spec(d),
                "gan-generator" => unet_generator_spec(256, d),
                "gan-discriminator" => patch_discriminator_spec(256, d),
                _ => unreachable!("validated by clap"),
            };
            spec.validate_chain()?;
            print!("{}", spec.describe());
            Ok(())
        }
    }
}

fn cmd_ingest(
    root: &Path,
    layout: Option<&Path>,
    sensor: &str,
    mask_suffix: &str,
    out: &Path,
) -> Result<(), Error> {
    let layout = match layout {
        Some(p) => LayoutConfig::load(p)?,
        None => LayoutConfig::flat(sensor.parse()?, mask_suffix),
    };
    let manifest = load_dataset(root, &layout)?;
    write_manifest(&manifest, out)?;
    let with_masks = manifest.iter().filter(|s| s.mask_path.is_some()).count();
    println!(
        "ingested {} samples ({} with masks) -> {}",
        manifest.len(),
        with_masks,
        out.display()
    );
    Ok(())
}

fn cmd_split(manifest: &Path, seed: u64, out: &Path) -> Result<(), Error> {
    let manifest_rows = read_manifest(manifest)?;
    let split = make_splits(&manifest_rows, SPLIT_RATIOS, seed)?;
    write_split_file(&split, &manifest_rows, SPLIT_RATIOS, out)?;
    println!(
        "split {} samples into {}/{}/{} (seed {seed}) -> {}",
        manifest_rows.len(),
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        out.display()
    );
    Ok(())
}

/// Manifest rows, optionally restricted to one subset of a split file.
fn select_samples(
    manifest: &Path,
    split: Option<&Path>,
    subset: &str,
) -> Result<Manifest, Error> {
    let rows = read_manifest(manifest)?;
    let Some(split_path) = split else {
        return Ok(rows);
    };
    let split = read_split_file(split_path)?;
    let wanted = match subset {
        "train" => &split.train,
        "validation" => &split.validation,
        _ => &split.test,
    };
    let set: std::collections::BTreeSet<&str> = wanted.iter().map(|s| s.as_str()).collect();
    Ok(rows.into_iter().filter(|s| set.contains(s.id.as_str())).collect())
}

fn assert_finite(log: &sclera_core::training::TrainLog) -> Result<(), Error> {
    match log.final_loss() {
        Some(l) if l.is_finite() => Ok(()),
        Some(l) => Err(Error::TrainingAborted(format!("non-finite loss {l}"))),
        None => Err(Error::TrainingAborted("no training epochs ran".into())),
    }
}

fn print_train_log(log: &sclera_core::training::TrainLog) {
    for e in &log.epochs {
        match e.metric {
            Some(m) => println!("epoch {:4}  loss {:.6}  metric {:.4}", e.epoch, e.loss, m),
            None => println!("epoch {:4}  loss {:.6}", e.epoch, e.loss),
        }
    }
    if log.stopped_early {
        println!("stopped early: target metric reached");
    }
}

fn cmd_train_detector(
    manifest: &Path,
    annotations: &Path,
    split: Option<&Path>,
    out: &Path,
    train_cfg: TrainConfig,
    width_divisor: usize,
) -> Result<(), Error> {
    let samples = select_samples(manifest, split, "train")?;
    let boxes = read_annotations(annotations)?;
    let det_cfg = DetectorConfig::default();
    let s = det_cfg.input_size as u32;
    let mut data: Vec<DetSample> = Vec::new();
    for sample in &samples {
        let Some(bbox) = boxes.get(&sample.id) else {
            return Err(Error::Other(format!(
                "no annotation for sample `{}`",
                sample.id
            )));
        };
        let img = image::open(&sample.image_path)?.into_rgb8();
        let resized = image::imageops::resize(&img, s, s, image::imageops::FilterType::Triangle);
        data.push((image_to_tensor(&resized, 0.0, 1.0), *bbox));
    }
    if data.is_empty() {
        return Err(Error::Other("no training samples".into()));
    }
    let mut net = FastYolo::new(det_cfg, width_divisor, train_cfg.seed)?;
    let log = train_detector(&mut net, &data, &train_cfg, DetectorLossWeights::default());
    print_train_log(&log);
    assert_finite(&log)?;
    save_detector(out, &mut net)?;
    println!("saved detector -> {}", out.display());
    Ok(())
}

fn crop_mask(mask: &BinaryMask, origin: (u32, u32), size: (u32, u32)) -> BinaryMask {
    BinaryMask::from_fn(size.0, size.1, |x, y| mask.get(origin.0 + x, origin.1 + y))
}

/// Image + mask pair at network resolution, optionally cropped to the
/// annotated ROI first.
fn load_training_pair(
    sample: &ImageSample,
    kind: SegmenterKind,
    bbox: Option<&sclera_core::detector::BoundingBox>,
    padding: PaddingPolicy,
) -> Result<(image::RgbImage, BinaryMask), Error> {
    let mask_path = sample
        .mask_path
        .as_ref()
        .ok_or_else(|| Error::Other(format!("sample `{}` has no mask", sample.id)))?;
    let img = image::open(&sample.image_path)?.into_rgb8();
    let mask = BinaryMask::load(mask_path)?;
    let (roi_img, roi_mask) = match bbox {
        Some(b) => {
            let (crop, t) = dataset::crop_roi(&img, &b.clamped(), padding)?;
            (crop, crop_mask(&mask, t.crop_origin, t.crop_size))
        }
        None => (img, mask),
    };
    let (resized, resized_mask, _) = dataset::resize_for(kind, &roi_img, Some(&roi_mask), None);
    Ok((resized, resized_mask.expect("mask passed in")))
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_seg(
    kind: SegmenterKind,
    manifest: &Path,
    split: Option<&Path>,
    annotations: Option<&Path>,
    out: &Path,
    train_cfg: TrainConfig,
    width_divisor: usize,
    lambda_l1: f64,
    padding: PaddingPolicy,
) -> Result<(), Error> {
    let samples = select_samples(manifest, split, "train")?;
    let boxes = match annotations {
        Some(p) => Some(read_annotations(p)?),
        None => None,
    };
    let labeled: Vec<&ImageSample> = samples.iter().filter(|s| s.mask_path.is_some()).collect();
    if labeled.is_empty() {
        return Err(Error::Other("no labeled training samples".into()));
    }
    match kind {
        SegmenterKind::Fcn8 | SegmenterKind::SegNet => {
            let mut data: Vec<SegSample> = Vec::new();
            for sample in &labeled {
                let bbox = boxes.as_ref().and_then(|b| b.get(&sample.id));
                let (img, mask) = load_training_pair(sample, kind, bbox, padding)?;
                let x = image_to_tensor(&img, 0.0, 1.0);
                let t = dataset::mask_to_tensor(&mask, kind);
                data.push((x, t));
            }
            let log = match kind {
                SegmenterKind::Fcn8 => {
                    let mut net = Fcn8::new(width_divisor, train_cfg.seed);
                    let log = train_segmenter(&mut net, &data, &train_cfg);
                    assert_finite(&log)?;
                    save_segmenter(out, kind, width_divisor, None, &mut net)?;
                    log
                }
                _ => {
                    let mut net = SegNet::new(width_divisor, train_cfg.seed);
                    let log = train_segmenter(&mut net, &data, &train_cfg);
                    assert_finite(&log)?;
                    save_segmenter(out, kind, width_divisor, None, &mut net)?;
                    log
                }
            };
            print_train_log(&log);
        }
        SegmenterKind::Gan => {
            let size = dataset::target_size_for(kind).0;
            let mut data: Vec<GanSample> = Vec::new();
            for sample in &labeled {
                let bbox = boxes.as_ref().and_then(|b| b.get(&sample.id));
                let (img, mask) = load_training_pair(sample, kind, bbox, padding)?;
                let x = image_to_tensor(&img, -1.0, 1.0);
                let t = dataset::mask_to_tensor(&mask, kind)
                    .insert_axis(Axis(0))
                    .mapv(|v| v * 2.0 - 1.0);
                data.push((x, t));
            }
            let gan_cfg = GanTrainConfig {
                epochs: train_cfg.epochs,
                lr_g: train_cfg.lr,
                lr_d: train_cfg.lr,
                lambda_l1,
                seed: train_cfg.seed,
                clip_norm: train_cfg.clip_norm,
                target_metric: train_cfg.target_metric,
            };
            let mut gen = UnetGenerator::new(size, width_divisor, train_cfg.seed);
            let mut disc = PatchDiscriminator::new(width_divisor, train_cfg.seed.wrapping_add(1));
            let log = train_gan(&mut gen, &mut disc, &data, &gan_cfg);
            print_train_log(&log);
            assert_finite(&log)?;
            save_segmenter(out, kind, width_divisor, Some(size), &mut gen)?;
        }
    }
    println!("saved {} segmenter -> {}", kind, out.display());
    Ok(())
}

fn build_pipeline(
    model: &Path,
    kind: SegmenterKind,
    detector: Option<&Path>,
    threshold: f64,
    padding: PaddingPolicy,
) -> Result<ScleraPipeline, Error> {
    let segmenter = load_segmenter(model, kind)?;
    let det = match detector {
        Some(p) => Some(load_detector(p)?),
        None => None,
    };
    let mut pipe = ScleraPipeline::new(det, segmenter);
    pipe.threshold = threshold;
    pipe.padding = padding;
    Ok(pipe)
}

fn build_predictor(
    model: Option<&Path>,
    kind: Option<&str>,
    detector: Option<&Path>,
    stub: Option<&str>,
    threshold: f64,
    padding: PaddingPolicy,
) -> Result<Box<dyn MaskPredictor>, Error> {
    match (stub, model, kind) {
        (Some("echo-gt"), _, _) => Ok(Box::new(EchoGroundTruth)),
        (Some("all-background"), _, _) => Ok(Box::new(AllBackground)),
        (None, Some(model), Some(kind)) => Ok(Box::new(build_pipeline(
            model,
            kind.parse()?,
            detector,
            threshold,
            padding,
        )?)),
        _ => Err(Error::Other(
            "pass either --stub or both --model and --kind".into(),
        )),
    }
}

fn summary_line(name: &str, s: &Summary) -> String {
    format!("{name:9} {s}")
}

fn finish_eval(
    result: &EvalResult,
    label: Option<&str>,
    default_label: &str,
    csv: Option<&Path>,
) -> Result<(), Error> {
    println!("images evaluated: {}", result.per_image.len());
    println!("{}", summary_line("precision", &result.precision));
    println!("{}", summary_line("recall", &result.recall));
    println!("{}", summary_line("f-score", &result.f));
    if let Some(path) = csv {
        let row = ReportRow::from_eval(label.unwrap_or(default_label), result);
        let body = report_csv(std::slice::from_ref(&row));
        if path.exists() {
            // append without repeating the header
            let row_line = body.lines().nth(1).unwrap_or_default();
            let mut text = std::fs::read_to_string(path)?;
            text.push_str(row_line);
            text.push('\n');
            std::fs::write(path, text)?;
        } else {
            std::fs::write(path, body)?;
        }
        println!("appended results -> {}", path.display());
    }
    Ok(())
}

fn cmd_segment(
    model: &Path,
    kind: SegmenterKind,
    detector: Option<&Path>,
    image: &Path,
    out: &Path,
    threshold: f64,
    padding: PaddingPolicy,
) -> Result<(), Error> {
    let mut pipe = build_pipeline(model, kind, detector, threshold, padding)?;
    let img = image::open(image)?.into_rgb8();
    let mask = pipe.segment_image(&img)?;
    mask.save(out)?;
    println!(
        "segmented {} ({} sclera pixels of {}) -> {}",
        image.display(),
        mask.count_true(),
        (mask.width() * mask.height()),
        out.display()
    );
    Ok(())
}

fn cmd_overlay(image: &Path, pred: &Path, gt: &Path, out: &Path) -> Result<(), Error> {
    let img = image::open(image)?.into_rgb8();
    let pred = BinaryMask::load(pred)?;
    let gt = BinaryMask::load(gt)?;
    if (pred.width(), pred.height()) != (img.width(), img.height())
        || (gt.width(), gt.height()) != (img.width(), img.height())
    {
        return Err(Error::ShapeMismatch(
            "image, prediction and ground truth must share one resolution".into(),
        ));
    }
    let counts = sclera_core::evaluation::pixel_counts(&pred, &gt);
    let overlay = render_error_overlay(&img, &pred, &gt);
    overlay.save(out).map_err(Error::Image)?;
    println!(
        "overlay: {} false positives (green), {} false negatives (red) -> {}",
        counts.fp,
        counts.fn_,
        out.display()
    );
    Ok(())
}

fn parse_report_csv(path: &Path) -> Result<Vec<ReportRow>, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && line.starts_with("label,") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Other(format!(
                "{}:{}: expected 7 CSV fields",
                path.display(),
                lineno + 1
            )));
        }
        let num = |i: usize| -> Result<f64, Error> {
            fields[i]
                .parse()
                .map_err(|_| Error::Other(format!("{}:{}: bad number", path.display(), lineno + 1)))
        };
        rows.push(ReportRow {
            label: fields[0].to_string(),
            precision: Summary {
                mean: num(1)?,
                std: num(2)?,
            },
            recall: Summary {
                mean: num(3)?,
                std: num(4)?,
            },
            f: Summary {
                mean: num(5)?,
                std: num(6)?,
            },
        });
    }
    Ok(rows)
}

fn cmd_report(csv: &[PathBuf], out: Option<&Path>) -> Result<(), Error> {
    let mut rows = Vec::new();
    for path in csv {
        rows.extend(parse_report_csv(path)?);
    }
    if rows.is_empty() {
        return Err(Error::Other("no result rows in the given CSV files".into()));
    }
    let table = report_text(&rows);
    print!("{table}");
    if let Some(path) = out {
        std::fs::write(path, table)?;
    }
    Ok(())
}
