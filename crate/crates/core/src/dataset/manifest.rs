use std::path::{Path, PathBuf};

use crate::dataset::{LayoutConfig, SensorTag};
use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// One eye image, optionally paired with its ground-truth mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSample {
    /// Relative image path without extension; unique within a manifest.
    pub id: String,
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub sensor: SensorTag,
    /// `(width, height)` in pixels.
    pub original_size: (u32, u32),
}

pub type Manifest = Vec<ImageSample>;

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn has_image_ext(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn find_mask(image_path: &Path, mask_suffix: &str, mask_dir: &str) -> Option<PathBuf> {
    let stem = image_path.file_stem()?.to_str()?;
    let dir = image_path.parent()?;
    let dir = if mask_dir.is_empty() {
        dir.to_path_buf()
    } else {
        dir.join(mask_dir)
    };
    for ext in IMAGE_EXTENSIONS {
        let candidate = dir.join(format!("{stem}{mask_suffix}.{ext}"));
        if candidate.is_file() && candidate != image_path {
            return Some(candidate);
        }
    }
    None
}

/// Scans `root` and builds a deterministic manifest: every image file matched
/// by a layout rule becomes a sample, paired with its mask when one exists.
/// Samples are sorted by id. Undecodable images are skipped with a warning;
/// a mask whose pixel dimensions differ from its image is an invariant
/// violation and fails the load.
pub fn load_dataset(root: &Path, layout: &LayoutConfig) -> Result<Manifest> {
    if !root.is_dir() {
        return Err(Error::MissingRoot(root.to_path_buf()));
    }
    let mut files = Vec::new();
    collect_files(root, &mut files)?;

    let mut samples = Vec::new();
    for path in &files {
        if !has_image_ext(path) {
            continue;
        }
        let rel = path
            .strip_prefix(root)
            .expect("collected under root")
            .to_string_lossy()
            .replace('\\', "/");
        let Some(rule) = layout.rule_for(&rel) else {
            continue;
        };
        // skip files that are themselves masks
        let stem = path.file_stem().unwrap().to_string_lossy();
        if !rule.mask_suffix.is_empty() && stem.ends_with(rule.mask_suffix.as_str()) {
            continue;
        }
        if !rule.mask_dir.is_empty() {
            let parent_name = path
                .parent()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            if parent_name == rule.mask_dir {
                continue;
            }
        }
        let image = match image::open(path) {
            Ok(img) => img,
            Err(e) => {
                log::warn!("skipping undecodable image {}: {e}", path.display());
                continue;
            }
        };
        let (w, h) = (image.width(), image.height());
        let mask_path = find_mask(path, &rule.mask_suffix, &rule.mask_dir);
        let id = rel
            .rsplit_once('.')
            .map(|(s, _)| s.to_string())
            .unwrap_or_else(|| rel.clone());
        if let Some(mp) = &mask_path {
            let (mw, mh) = image::image_dimensions(mp)?;
            if (mw, mh) != (w, h) {
                return Err(Error::MaskSizeMismatch {
                    id,
                    image_w: w,
                    image_h: h,
                    mask_w: mw,
                    mask_h: mh,
                });
            }
        }
        samples.push(ImageSample {
            id,
            image_path: path.clone(),
            mask_path,
            sensor: rule.sensor,
            original_size: (w, h),
        });
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(samples)
}

/// Writes a manifest as line-oriented text. Rerunning on an unchanged
/// directory yields a byte-identical file.
pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut out = String::from("# id\timage\tmask\tsensor\twidth\theight\n");
    for s in manifest {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            s.id,
            s.image_path.display(),
            s.mask_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "-".into()),
            s.sensor,
            s.original_size.0,
            s.original_size.1,
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::Other(format!(
                "{}:{}: expected 6 tab-separated fields",
                path.display(),
                lineno + 1
            )));
        }
        samples.push(ImageSample {
            id: fields[0].to_string(),
            image_path: PathBuf::from(fields[1]),
            mask_path: if fields[2] == "-" {
                None
            } else {
                Some(PathBuf::from(fields[2]))
            },
            sensor: fields[3].parse()?,
            original_size: (
                fields[4]
                    .parse()
                    .map_err(|_| Error::Other(format!("bad width at line {}", lineno + 1)))?,
                fields[5]
                    .parse()
                    .map_err(|_| Error::Other(format!("bad height at line {}", lineno + 1)))?,
            ),
        });
    }
    Ok(samples)
}
