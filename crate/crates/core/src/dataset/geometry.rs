use image::imageops::{self, FilterType};
use image::RgbImage;
use ndarray::Array3;

use crate::dataset::BinaryMask;
use crate::detector::BoundingBox;
use crate::error::{Error, Result};
use crate::segmenters::SegmenterKind;

/// Per-axis expansion factors applied to the detected box before cropping.
/// The detector is trained on iris-centered boxes; the sclera extends well
/// beyond the iris, more sideways than vertically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaddingPolicy {
    pub x_factor: f64,
    pub y_factor: f64,
}

impl Default for PaddingPolicy {
    fn default() -> Self {
        PaddingPolicy {
            x_factor: 2.5,
            y_factor: 2.0,
        }
    }
}

/// Geometry of a crop + resize, recorded so a network-resolution mask can be
/// mapped back into the original image frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiTransform {
    /// `(x, y)` of the crop's top-left corner in the original image.
    pub crop_origin: (u32, u32),
    /// `(w, h)` of the crop.
    pub crop_size: (u32, u32),
    /// `(w, h)` the crop was resized to for the segmenter.
    pub resized_to: (u32, u32),
}

impl RoiTransform {
    pub fn identity(w: u32, h: u32) -> Self {
        RoiTransform {
            crop_origin: (0, 0),
            crop_size: (w, h),
            resized_to: (w, h),
        }
    }
}

/// Expands `bbox` by the padding factors, clamps the rectangle into the image
/// and extracts the crop. Size is clamped first, then the origin is shifted so
/// the rectangle stays inside the frame (a box touching an edge keeps its
/// padded size and slides inward).
pub fn crop_roi(
    image: &RgbImage,
    bbox: &BoundingBox,
    pad: PaddingPolicy,
) -> Result<(RgbImage, RoiTransform)> {
    let (iw, ih) = (image.width() as f64, image.height() as f64);
    let cx = bbox.cx * iw;
    let cy = bbox.cy * ih;
    let w = (bbox.w * iw * pad.x_factor).round();
    let h = (bbox.h * ih * pad.y_factor).round();
    let w = w.min(iw).round() as i64;
    let h = h.min(ih).round() as i64;
    if w <= 0 || h <= 0 {
        return Err(Error::NoRoi);
    }
    let x0 = (cx - w as f64 / 2.0).round() as i64;
    let y0 = (cy - h as f64 / 2.0).round() as i64;
    let x0 = x0.clamp(0, iw as i64 - w) as u32;
    let y0 = y0.clamp(0, ih as i64 - h) as u32;
    let (w, h) = (w as u32, h as u32);
    let crop = imageops::crop_imm(image, x0, y0, w, h).to_image();
    Ok((
        crop,
        RoiTransform {
            crop_origin: (x0, y0),
            crop_size: (w, h),
            resized_to: (w, h),
        },
    ))
}

/// Segmenter input size per approach: `(width, height)`.
pub fn target_size_for(kind: SegmenterKind) -> (u32, u32) {
    match kind {
        SegmenterKind::Fcn8 | SegmenterKind::SegNet => (320, 240),
        SegmenterKind::Gan => (256, 256),
    }
}

/// Mask channel count per approach; the GAN consumes the mask replicated to
/// three channels.
pub fn mask_channels_for(kind: SegmenterKind) -> usize {
    match kind {
        SegmenterKind::Gan => 3,
        _ => 1,
    }
}

/// Resizes an image (bilinear) and its mask (nearest-neighbor, re-binarized)
/// to the approach's input size, updating the transform's `resized_to`.
pub fn resize_for(
    kind: SegmenterKind,
    image: &RgbImage,
    mask: Option<&BinaryMask>,
    transform: Option<RoiTransform>,
) -> (RgbImage, Option<BinaryMask>, RoiTransform) {
    let (tw, th) = target_size_for(kind);
    let resized = if (image.width(), image.height()) == (tw, th) {
        image.clone()
    } else {
        imageops::resize(image, tw, th, FilterType::Triangle)
    };
    let mask = mask.map(|m| m.resize_nearest(tw, th));
    let mut t = transform.unwrap_or_else(|| RoiTransform::identity(image.width(), image.height()));
    t.resized_to = (tw, th);
    (resized, mask, t)
}

/// `(channels, height, width)` mask tensor; GAN masks replicate the single
/// channel three times.
pub fn mask_to_tensor(mask: &BinaryMask, kind: SegmenterKind) -> Array3<f64> {
    mask.to_tensor(mask_channels_for(kind))
}

/// Maps a network-resolution mask back into the original image frame: resize
/// (nearest) to the crop size, then paste at the crop origin on an
/// all-background canvas.
pub fn map_mask_to_original(
    mask: &BinaryMask,
    t: &RoiTransform,
    original_size: (u32, u32),
) -> Result<BinaryMask> {
    if (mask.width(), mask.height()) != t.resized_to {
        return Err(Error::BadTransform(format!(
            "mask is {}x{} but transform says resized_to {}x{}",
            mask.width(),
            mask.height(),
            t.resized_to.0,
            t.resized_to.1
        )));
    }
    let (ox, oy) = t.crop_origin;
    let (cw, ch) = t.crop_size;
    let (ow, oh) = original_size;
    if ox + cw > ow || oy + ch > oh {
        return Err(Error::BadTransform(format!(
            "crop {}x{}@({},{}) exceeds original {}x{}",
            cw, ch, ox, oy, ow, oh
        )));
    }
    let at_crop = mask.resize_nearest(cw, ch);
    let mut canvas = BinaryMask::filled(ow, oh, false);
    for y in 0..ch {
        for x in 0..cw {
            if at_crop.get(x, y) {
                canvas.set(ox + x, oy + y, true);
            }
        }
    }
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            image::Rgb([(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8])
        })
    }

    #[test]
    fn full_image_box_with_unit_pad_is_identity() {
        let img = gradient_image(40, 30);
        let bbox = BoundingBox {
            cx: 0.5,
            cy: 0.5,
            w: 1.0,
            h: 1.0,
            confidence: 1.0,
        };
        let (crop, t) = crop_roi(
            &img,
            &bbox,
            PaddingPolicy {
                x_factor: 1.0,
                y_factor: 1.0,
            },
        )
        .unwrap();
        assert_eq!(crop, img);
        assert_eq!(t.crop_origin, (0, 0));
        assert_eq!(t.crop_size, (40, 30));
    }

    #[test]
    fn centered_box_doubles_with_pad_two() {
        let img = gradient_image(400, 300);
        // 100x100 box centered at (200, 150)
        let bbox = BoundingBox {
            cx: 0.5,
            cy: 0.5,
            w: 100.0 / 400.0,
            h: 100.0 / 300.0,
            confidence: 1.0,
        };
        let (_, t) = crop_roi(
            &img,
            &bbox,
            PaddingPolicy {
                x_factor: 2.0,
                y_factor: 2.0,
            },
        )
        .unwrap();
        assert_eq!(t.crop_size, (200, 200));
        assert_eq!(t.crop_origin, (100, 50));
    }

    #[test]
    fn edge_box_is_clamped_against_the_border() {
        let img = gradient_image(400, 300);
        // 100x100 box touching the right edge: center at x = 350
        let bbox = BoundingBox {
            cx: 350.0 / 400.0,
            cy: 0.5,
            w: 100.0 / 400.0,
            h: 100.0 / 300.0,
            confidence: 1.0,
        };
        let (_, t) = crop_roi(
            &img,
            &bbox,
            PaddingPolicy {
                x_factor: 3.0,
                y_factor: 3.0,
            },
        )
        .unwrap();
        assert_eq!(t.crop_size, (300, 300));
        // right edge must coincide with the image border
        assert_eq!(t.crop_origin.0 + t.crop_size.0, 400);
    }

    #[test]
    fn degenerate_box_signals_no_roi() {
        let img = gradient_image(40, 30);
        let bbox = BoundingBox {
            cx: 0.5,
            cy: 0.5,
            w: 0.0,
            h: 0.1,
            confidence: 1.0,
        };
        assert!(matches!(
            crop_roi(&img, &bbox, PaddingPolicy::default()),
            Err(Error::NoRoi)
        ));
    }

    #[test]
    fn resize_targets_follow_approach() {
        let img = gradient_image(400, 300);
        let mask = BinaryMask::from_fn(400, 300, |x, _| x < 200);
        let (ri, rm, t) = resize_for(SegmenterKind::Fcn8, &img, Some(&mask), None);
        assert_eq!((ri.width(), ri.height()), (320, 240));
        let rm = rm.unwrap();
        assert_eq!((rm.width(), rm.height()), (320, 240));
        assert_eq!(t.resized_to, (320, 240));
        let tensor = mask_to_tensor(&rm, SegmenterKind::Fcn8);
        assert_eq!(tensor.dim(), (1, 240, 320));

        let (gi, gm, _) = resize_for(SegmenterKind::Gan, &img, Some(&mask), None);
        assert_eq!((gi.width(), gi.height()), (256, 256));
        let gt = mask_to_tensor(&gm.unwrap(), SegmenterKind::Gan);
        assert_eq!(gt.dim(), (3, 256, 256));
    }

    #[test]
    fn resize_at_target_size_is_pixel_identical() {
        let img = gradient_image(320, 240);
        let (r, _, _) = resize_for(SegmenterKind::SegNet, &img, None, None);
        assert_eq!(r, img);
    }

    #[test]
    fn map_back_identity_and_paste() {
        let m = BinaryMask::from_fn(20, 10, |x, y| (x + y) % 3 == 0);
        let t = RoiTransform::identity(20, 10);
        assert_eq!(map_mask_to_original(&m, &t, (20, 10)).unwrap(), m);

        // crop at (10,10), 50x50, all-sclera
        let m = BinaryMask::filled(50, 50, true);
        let t = RoiTransform {
            crop_origin: (10, 10),
            crop_size: (50, 50),
            resized_to: (50, 50),
        };
        let canvas = map_mask_to_original(&m, &t, (100, 100)).unwrap();
        assert_eq!(canvas.count_true(), 2500);
        assert!(canvas.get(10, 10) && canvas.get(59, 59));
        assert!(!canvas.get(9, 10) && !canvas.get(60, 59));
    }

    #[test]
    fn inconsistent_transform_is_fatal() {
        let m = BinaryMask::filled(50, 50, true);
        let t = RoiTransform {
            crop_origin: (90, 90),
            crop_size: (50, 50),
            resized_to: (50, 50),
        };
        assert!(map_mask_to_original(&m, &t, (100, 100)).is_err());
    }
}
