//! Boolean per-pixel masks shared by skin detection, segmentation and scoring.

use std::path::Path;

use image::GrayImage;

use crate::image_io::ImageIoError;

/// A row-major boolean mask. `true` marks a selected pixel (skin, lesion).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    /// Panics if `bits.len() != width * height`.
    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(
            bits.len(),
            width as usize * height as usize,
            "mask buffer does not match {width}x{height}"
        );
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    /// Number of selected pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Selected pixels with at least one unselected 4-neighbour. Pixels outside
    /// the image count as unselected, so the result is an 8-connected contour.
    pub fn boundary(&self) -> Vec<(u32, u32)> {
        let (w, h) = (self.width as i64, self.height as i64);
        let selected = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && self.get(x as u32, y as u32);
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !selected(x, y) {
                    continue;
                }
                let edge = !selected(x - 1, y)
                    || !selected(x + 1, y)
                    || !selected(x, y - 1)
                    || !selected(x, y + 1);
                if edge {
                    out.push((x as u32, y as u32));
                }
            }
        }
        out
    }

    /// Renders the mask as an 8-bit image with values {0, 255}.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            image::Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    /// Any nonzero pixel is treated as selected.
    pub fn from_gray(image: &GrayImage) -> Self {
        let bits = image.as_raw().iter().map(|&v| v > 0).collect();
        Self::from_bits(image.width(), image.height(), bits)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageIoError> {
        crate::image_io::save_gray(&self.to_gray(), path)
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageIoError> {
        Ok(Self::from_gray(&crate::image_io::load_gray(path)?))
    }
}
