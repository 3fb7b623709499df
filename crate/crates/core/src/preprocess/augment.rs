//! Training-time augmentation: random resized crop, flips and colour jitter.
//!
//! Sampling and application are separate so a drawn parameter set can be
//! logged, replayed, or constructed by hand.

use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::resize::{crop, resize_bilinear};

pub const CROP_SCALE: (f64, f64) = (0.08, 1.0);
pub const CROP_RATIO: (f64, f64) = (3.0 / 4.0, 4.0 / 3.0);
pub const JITTER_FACTOR: (f32, f32) = (0.8, 1.2);
pub const HUE_SHIFT: (f32, f32) = (-0.1, 0.1);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropWindow {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub crop: CropWindow,
    pub hflip: bool,
    pub vflip: bool,
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    /// Hue rotation as a fraction of the full circle.
    pub hue: f32,
}

impl AugmentParams {
    /// Full-image crop, no flips, neutral jitter.
    pub fn identity(width: u32, height: u32) -> Self {
        Self {
            crop: CropWindow {
                x: 0,
                y: 0,
                width,
                height,
            },
            hflip: false,
            vflip: false,
            brightness: 1.0,
            contrast: 1.0,
            saturation: 1.0,
            hue: 0.0,
        }
    }

    /// Draws a parameter set for an image of the given size. The draw order
    /// is fixed: crop, horizontal flip, vertical flip, then jitter factors.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, width: u32, height: u32) -> Self {
        let crop = sample_crop(rng, width, height);
        let hflip = rng.gen_bool(0.5);
        let vflip = rng.gen_bool(0.5);
        let brightness = rng.gen_range(JITTER_FACTOR.0..=JITTER_FACTOR.1);
        let contrast = rng.gen_range(JITTER_FACTOR.0..=JITTER_FACTOR.1);
        let saturation = rng.gen_range(JITTER_FACTOR.0..=JITTER_FACTOR.1);
        let hue = rng.gen_range(HUE_SHIFT.0..=HUE_SHIFT.1);
        Self {
            crop,
            hflip,
            vflip,
            brightness,
            contrast,
            saturation,
            hue,
        }
    }

    pub fn apply(&self, image: &RgbImage, size: u32) -> RgbImage {
        let c = self.crop;
        let cropped = if (c.x, c.y, c.width, c.height) == (0, 0, image.width(), image.height()) {
            image.clone()
        } else {
            crop(image, c.x, c.y, c.width, c.height)
        };
        let mut out = resize_bilinear(&cropped, size, size);
        if self.hflip {
            image::imageops::flip_horizontal_in_place(&mut out);
        }
        if self.vflip {
            image::imageops::flip_vertical_in_place(&mut out);
        }
        color_jitter(&out, self)
    }
}

/// Area fraction in [0.08, 1] and log-uniform aspect ratio in [3/4, 4/3],
/// ten attempts, then a centred crop with the ratio clamped into range.
fn sample_crop<R: Rng + ?Sized>(rng: &mut R, width: u32, height: u32) -> CropWindow {
    let area = width as f64 * height as f64;
    let (log_lo, log_hi) = (CROP_RATIO.0.ln(), CROP_RATIO.1.ln());
    for _ in 0..10 {
        let target = area * rng.gen_range(CROP_SCALE.0..=CROP_SCALE.1);
        let ratio = rng.gen_range(log_lo..=log_hi).exp();
        let w = (target * ratio).sqrt().round() as u32;
        let h = (target / ratio).sqrt().round() as u32;
        if w > 0 && h > 0 && w <= width && h <= height {
            let x = rng.gen_range(0..=width - w);
            let y = rng.gen_range(0..=height - h);
            return CropWindow {
                x,
                y,
                width: w,
                height: h,
            };
        }
    }
    let in_ratio = width as f64 / height as f64;
    let (w, h) = if in_ratio < CROP_RATIO.0 {
        (width, ((width as f64 / CROP_RATIO.0).round() as u32).min(height))
    } else if in_ratio > CROP_RATIO.1 {
        (((height as f64 * CROP_RATIO.1).round() as u32).min(width), height)
    } else {
        (width, height)
    };
    CropWindow {
        x: (width - w) / 2,
        y: (height - h) / 2,
        width: w.max(1),
        height: h.max(1),
    }
}

fn gray_of(p: [f32; 3]) -> f32 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

/// Brightness, contrast, saturation and hue adjustments, in that order.
/// Neutral factors leave the image bit-identical.
pub fn color_jitter(image: &RgbImage, params: &AugmentParams) -> RgbImage {
    let mut px: Vec<[f32; 3]> = image
        .pixels()
        .map(|p| p.0.map(|v| v as f32))
        .collect();
    let clamp = |v: f32| v.clamp(0.0, 255.0);

    if params.brightness != 1.0 {
        for p in &mut px {
            *p = p.map(|v| clamp(v * params.brightness));
        }
    }
    if params.contrast != 1.0 && !px.is_empty() {
        let mean = px.iter().map(|&p| gray_of(p)).sum::<f32>() / px.len() as f32;
        let f = params.contrast;
        for p in &mut px {
            *p = p.map(|v| clamp(f * v + (1.0 - f) * mean));
        }
    }
    if params.saturation != 1.0 {
        let f = params.saturation;
        for p in &mut px {
            let g = gray_of(*p);
            *p = p.map(|v| clamp(f * v + (1.0 - f) * g));
        }
    }
    if params.hue != 0.0 {
        for p in &mut px {
            let (h, s, v) = rgb_to_hsv(*p);
            *p = hsv_to_rgb((h + params.hue).rem_euclid(1.0), s, v);
        }
    }

    let mut out = RgbImage::new(image.width(), image.height());
    for (dst, p) in out.pixels_mut().zip(px) {
        *dst = Rgb(p.map(|v| v.round().clamp(0.0, 255.0) as u8));
    }
    out
}

/// Hue in [0, 1), saturation in [0, 1], value on the 0..255 scale.
fn rgb_to_hsv([r, g, b]: [f32; 3]) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let s = if max > 0.0 { d / max } else { 0.0 };
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h6 = h * 6.0;
    let sector = (h6.floor() as i32).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}
