//! Grey-scale morphology with a cross-shaped structuring element, and the
//! black-hat hair/ruler suppression built on it.

use image::{GrayImage, Luma, RgbImage};

use crate::colorspace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HairParams {
    /// Odd side length of the cross structuring element.
    pub kernel: u32,
    /// Black-hat response above which a pixel is treated as hair.
    pub threshold: u8,
    /// Flagged fraction above which the image is rejected.
    pub max_fraction: f64,
}

impl Default for HairParams {
    fn default() -> Self {
        Self {
            kernel: 17,
            threshold: 10,
            max_fraction: 0.40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HairRemoval {
    pub image: RgbImage,
    pub flagged: usize,
    pub flagged_fraction: f64,
}

fn line_filter(src: &GrayImage, radius: u32, horizontal: bool, max: bool) -> GrayImage {
    let (w, h) = src.dimensions();
    GrayImage::from_fn(w, h, |x, y| {
        let (pos, len) = if horizontal { (x, w) } else { (y, h) };
        let lo = pos.saturating_sub(radius);
        let hi = (pos + radius).min(len - 1);
        let vals = (lo..=hi).map(|k| {
            if horizontal {
                src.get_pixel(k, y).0[0]
            } else {
                src.get_pixel(x, k).0[0]
            }
        });
        Luma([if max { vals.max() } else { vals.min() }.unwrap_or(0)])
    })
}

fn combine(a: &GrayImage, b: &GrayImage, max: bool) -> GrayImage {
    GrayImage::from_fn(a.width(), a.height(), |x, y| {
        let (p, q) = (a.get_pixel(x, y).0[0], b.get_pixel(x, y).0[0]);
        Luma([if max { p.max(q) } else { p.min(q) }])
    })
}

/// Dilation by a cross of side `kernel`; out-of-image samples are ignored.
pub fn dilate_cross(src: &GrayImage, kernel: u32) -> GrayImage {
    let r = kernel / 2;
    combine(&line_filter(src, r, true, true), &line_filter(src, r, false, true), true)
}

pub fn erode_cross(src: &GrayImage, kernel: u32) -> GrayImage {
    let r = kernel / 2;
    combine(&line_filter(src, r, true, false), &line_filter(src, r, false, false), false)
}

pub fn close_cross(src: &GrayImage, kernel: u32) -> GrayImage {
    erode_cross(&dilate_cross(src, kernel), kernel)
}

/// Closing minus the image: bright where thin dark structures were filled in.
pub fn black_hat(src: &GrayImage, kernel: u32) -> GrayImage {
    let closed = close_cross(src, kernel);
    GrayImage::from_fn(src.width(), src.height(), |x, y| {
        Luma([closed.get_pixel(x, y).0[0].saturating_sub(src.get_pixel(x, y).0[0])])
    })
}

/// Flags thin dark structures via the black-hat response and replaces them by
/// an inverse-distance weighted mean of the nearest unflagged pixels.
pub fn remove_hair(image: &RgbImage, params: &HairParams) -> HairRemoval {
    let (w, h) = image.dimensions();
    let gray = colorspace::luma(image);
    let bh = black_hat(&gray, params.kernel);
    let flags: Vec<bool> = bh.as_raw().iter().map(|&v| v > params.threshold).collect();
    let flagged = flags.iter().filter(|&&f| f).count();
    let total = (w as usize * h as usize).max(1);
    let mut out = image.clone();
    if flagged > 0 && flagged < total {
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                if !flags[(y * w as i64 + x) as usize] {
                    continue;
                }
                out.put_pixel(x as u32, y as u32, inpaint_at(image, &flags, x, y));
            }
        }
    }
    HairRemoval {
        image: out,
        flagged,
        flagged_fraction: flagged as f64 / total as f64,
    }
}

fn inpaint_at(image: &RgbImage, flags: &[bool], x: i64, y: i64) -> image::Rgb<u8> {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let max_r = w.max(h);
    let mut r = 2;
    while r <= max_r {
        let mut acc = [0.0f64; 3];
        let mut wsum = 0.0;
        for yy in (y - r).max(0)..=(y + r).min(h - 1) {
            for xx in (x - r).max(0)..=(x + r).min(w - 1) {
                if flags[(yy * w + xx) as usize] {
                    continue;
                }
                let d = (((xx - x).pow(2) + (yy - y).pow(2)) as f64).sqrt();
                let wt = 1.0 / d;
                let p = image.get_pixel(xx as u32, yy as u32).0;
                for c in 0..3 {
                    acc[c] += wt * p[c] as f64;
                }
                wsum += wt;
            }
        }
        if wsum > 0.0 {
            return image::Rgb(acc.map(|a| colorspace::quantize(a / wsum)));
        }
        r *= 2;
    }
    *image.get_pixel(x as u32, y as u32)
}
