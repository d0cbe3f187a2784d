use image::GrayImage;
use ndarray::Array3;

use crate::error::{Error, Result};

/// A two-valued sclera mask. Serialized as 8-bit grayscale with 0 for
/// background and 255 for sclera; any pixel >= 128 reads back as sclera, so
/// lossy-compressed annotations stay usable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    pixels: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, pixels: Vec<bool>) -> Result<Self> {
        if pixels.len() != (width * height) as usize {
            return Err(Error::ShapeMismatch(format!(
                "mask buffer has {} pixels for {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        BinaryMask {
            width,
            height,
            pixels: vec![value; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut pixels = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        BinaryMask {
            width,
            height,
            pixels,
        }
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        BinaryMask {
            width: img.width(),
            height: img.height(),
            pixels: img.pixels().map(|p| p.0[0] >= 128).collect(),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let img = image::open(path)?.into_luma8();
        Ok(Self::from_gray(&img))
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            image::Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_gray().save(path)?;
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.pixels[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.pixels[(y * self.width + x) as usize] = v;
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn count_true(&self) -> usize {
        self.pixels.iter().filter(|p| **p).count()
    }

    /// Nearest-neighbor resize; stays two-valued by construction.
    pub fn resize_nearest(&self, width: u32, height: u32) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        BinaryMask::from_fn(width, height, |x, y| {
            let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as u32;
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as u32;
            self.get(sx.min(self.width - 1), sy.min(self.height - 1))
        })
    }

    /// `(channels, height, width)` tensor with 0.0 / 1.0 values.
    pub fn to_tensor(&self, channels: usize) -> Array3<f64> {
        Array3::from_shape_fn((channels, self.height as usize, self.width as usize), |(_, y, x)| {
            if self.get(x as u32, y as u32) {
                1.0
            } else {
                0.0
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_at_128() {
        let img = GrayImage::from_fn(3, 1, |x, _| image::Luma([(x as u8) * 127]));
        let mask = BinaryMask::from_gray(&img);
        assert_eq!(mask.pixels(), &[false, false, true]);
    }

    #[test]
    fn identity_resize_is_noop() {
        let m = BinaryMask::from_fn(4, 3, |x, y| (x + y) % 2 == 0);
        assert_eq!(m.resize_nearest(4, 3), m);
    }

    #[test]
    fn resize_preserves_binarity() {
        let m = BinaryMask::from_fn(10, 7, |x, y| x * y % 3 == 0);
        let r = m.resize_nearest(23, 17);
        assert_eq!(r.width(), 23);
        assert_eq!(r.height(), 17);
        // Vec<bool> representation is two-valued by construction; check the
        // round trip through the serialized form as well.
        let back = BinaryMask::from_gray(&r.to_gray());
        assert_eq!(back, r);
    }
}
