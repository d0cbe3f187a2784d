//! Deterministic synthetic fixtures: a bright ellipse (the "sclera") on a
//! dark noisy field, with its pixel mask and a normalized bounding box.
//! Used by the smoke-training tests and the CLI integration tests, so no
//! real eye imagery is needed in the repository.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{BinaryMask, SensorTag};
use crate::detector::BoundingBox;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub image: RgbImage,
    pub mask: BinaryMask,
    /// Normalized box around the ellipse, mimicking a periocular annotation.
    pub bbox: BoundingBox,
}

/// One random ellipse sample at the given resolution.
pub fn ellipse_sample(width: u32, height: u32, rng: &mut ChaCha8Rng) -> SyntheticSample {
    let w = width as f64;
    let h = height as f64;
    let cx = rng.random_range(0.38..0.62) * w;
    let cy = rng.random_range(0.38..0.62) * h;
    let rx = rng.random_range(0.14..0.26) * w;
    let ry = rng.random_range(0.12..0.22) * h;

    let mut image = RgbImage::new(width, height);
    let mask = BinaryMask::from_fn(width, height, |x, y| {
        let dx = (x as f64 + 0.5 - cx) / rx;
        let dy = (y as f64 + 0.5 - cy) / ry;
        dx * dx + dy * dy <= 1.0
    });
    for (x, y, px) in image.enumerate_pixels_mut() {
        let noise = rng.random_range(-12.0..12.0);
        let (r, g, b): (f64, f64, f64) = if mask.get(x, y) {
            (225.0 + noise, 222.0 + noise, 230.0 + noise)
        } else {
            (38.0 + noise, 30.0 + noise, 34.0 + noise)
        };
        *px = Rgb([r.clamp(0.0, 255.0) as u8, g.clamp(0.0, 255.0) as u8, b.clamp(0.0, 255.0) as u8]);
    }
    let bbox = BoundingBox {
        cx: cx / w,
        cy: cy / h,
        w: 2.0 * rx / w,
        h: 2.0 * ry / h,
        confidence: 1.0,
    }
    .clamped();
    SyntheticSample { image, mask, bbox }
}

/// A reproducible set of ellipse samples.
pub fn ellipse_set(count: usize, width: u32, height: u32, seed: u64) -> Vec<SyntheticSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| ellipse_sample(width, height, &mut rng))
        .collect()
}

/// Writes samples as an on-disk dataset tree:
/// `<root>/<sensor>/sNNN.png` images with `sNNN_mask.png` masks next to them,
/// plus a `<root>/annotations.txt` file of normalized boxes, one per image.
pub fn write_fixture_tree(
    root: &Path,
    sensor: SensorTag,
    samples: &[SyntheticSample],
) -> Result<Vec<String>> {
    let dir = root.join(sensor.as_str());
    std::fs::create_dir_all(&dir)?;
    let mut annotations = String::new();
    let mut ids = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let stem = format!("s{i:03}");
        s.image
            .save(dir.join(format!("{stem}.png")))
            .map_err(crate::error::Error::Image)?;
        s.mask.save(&dir.join(format!("{stem}_mask.png")))?;
        let id = format!("{}/{stem}", sensor.as_str());
        annotations.push_str(&format!(
            "{id} {:.6} {:.6} {:.6} {:.6}\n",
            s.bbox.cx, s.bbox.cy, s.bbox.w, s.bbox.h
        ));
        ids.push(id);
    }
    std::fs::write(root.join("annotations.txt"), annotations)?;
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_is_deterministic() {
        let a = ellipse_set(3, 64, 48, 42);
        let b = ellipse_set(3, 64, 48, 42);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.mask, y.mask);
        }
        let c = ellipse_set(3, 64, 48, 43);
        assert_ne!(a[0].image, c[0].image);
    }

    #[test]
    fn mask_and_box_cover_the_ellipse() {
        for s in ellipse_set(4, 64, 48, 7) {
            let inside = s.mask.count_true();
            assert!(inside > 0 && inside < (64 * 48));
            // every mask pixel lies inside the (clamped) box
            let x0 = ((s.bbox.cx - s.bbox.w / 2.0) * 64.0).floor() as i64;
            let x1 = ((s.bbox.cx + s.bbox.w / 2.0) * 64.0).ceil() as i64;
            let y0 = ((s.bbox.cy - s.bbox.h / 2.0) * 48.0).floor() as i64;
            let y1 = ((s.bbox.cy + s.bbox.h / 2.0) * 48.0).ceil() as i64;
            for y in 0..48u32 {
                for x in 0..64u32 {
                    if s.mask.get(x, y) {
                        assert!((x as i64) >= x0 && (x as i64) < x1);
                        assert!((y as i64) >= y0 && (y as i64) < y1);
                    }
                }
            }
        }
    }

    #[test]
    fn fixture_tree_round_trips_through_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let samples = ellipse_set(3, 64, 48, 1);
        let ids = write_fixture_tree(dir.path(), SensorTag::UbirisV2, &samples).unwrap();
        assert_eq!(ids.len(), 3);
        let layout = crate::dataset::LayoutConfig::flat(SensorTag::UbirisV2, "_mask");
        let manifest = crate::dataset::load_dataset(dir.path(), &layout).unwrap();
        assert_eq!(manifest.len(), 3);
        assert!(manifest.iter().all(|s| s.mask_path.is_some()));
        let ann = crate::detector::read_annotations(&dir.path().join("annotations.txt")).unwrap();
        assert_eq!(ann.len(), 3);
        assert!(ann.contains_key("ubiris_v2/s000"));
    }
}
