//! Colour-space conversions and YCbCr skin masking.
//!
//! YCbCr follows ITU-R BT.601 in its full-range (JPEG) form. CIELAB goes
//! through the sRGB transfer curve, linear RGB, CIE XYZ and the D65 white.

use std::ops::RangeInclusive;
use std::sync::OnceLock;

use image::{GrayImage, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::mask::BinaryMask;

/// Skin masks share the generic boolean mask representation.
pub type SkinMask = BinaryMask;

/// Inclusive Cb bounds for skin pixels.
pub const SKIN_CB: RangeInclusive<u8> = 77..=173;
/// Inclusive Cr bounds for skin pixels.
pub const SKIN_CR: RangeInclusive<u8> = 133..=255;

/// D65 reference white in XYZ, Y normalized to 1.
pub const D65_WHITE: [f64; 3] = [0.950_47, 1.0, 1.088_83];

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

// Exact inverse of `SRGB_TO_XYZ`, so Lab round trips are lossless.
const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.240_454_836_021_408_7, -1.537_138_850_102_575, -0.498_531_546_868_481],
    [-0.969_266_389_875_653_8, 1.876_010_928_842_491, 0.041_556_082_346_673_545],
    [0.055_643_419_604_213_67, -0.204_025_854_267_698_18, 1.057_225_162_457_929],
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ColorError {
    #[error("skin mask selects no pixels")]
    EmptyMask,
    #[error("mask is {mask_w}x{mask_h} but image is {image_w}x{image_h}")]
    DimensionMismatch {
        mask_w: u32,
        mask_h: u32,
        image_w: u32,
        image_h: u32,
    },
}

/// A CIELAB colour. `l` is lightness in [0, 100].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabPixel {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

/// Per-pixel Y, Cb and Cr planes, each quantized to 8 bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YCbCrPlanes {
    pub width: u32,
    pub height: u32,
    pub y: Vec<u8>,
    pub cb: Vec<u8>,
    pub cr: Vec<u8>,
}

/// Unquantized BT.601 full-range transform of one pixel.
#[inline]
pub fn ycbcr_exact(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(f64::from);
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b,
        128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b,
    ]
}

/// Round-half-away and clamp into the 8-bit range.
#[inline]
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// 8-bit BT.601 pixel. Coefficients are exact multiples of 10⁻⁶, so the
/// transform runs in integers and half-way values round up without f64 error.
#[inline]
pub fn ycbcr_pixel(rgb: [u8; 3]) -> [u8; 3] {
    const SCALE: i64 = 1_000_000;
    let [r, g, b] = rgb.map(i64::from);
    let round = |v: i64| (v + SCALE / 2).div_euclid(SCALE).clamp(0, 255) as u8;
    [
        round(299_000 * r + 587_000 * g + 114_000 * b),
        round(128 * SCALE - 168_736 * r - 331_264 * g + 500_000 * b),
        round(128 * SCALE + 500_000 * r - 418_688 * g - 81_312 * b),
    ]
}

pub fn rgb_to_ycbcr(image: &RgbImage) -> YCbCrPlanes {
    let n = image.width() as usize * image.height() as usize;
    let mut planes = YCbCrPlanes {
        width: image.width(),
        height: image.height(),
        y: Vec::with_capacity(n),
        cb: Vec::with_capacity(n),
        cr: Vec::with_capacity(n),
    };
    for p in image.pixels() {
        let [y, cb, cr] = ycbcr_pixel(p.0);
        planes.y.push(y);
        planes.cb.push(cb);
        planes.cr.push(cr);
    }
    planes
}

/// BT.601 luma as a grayscale image.
pub fn luma(image: &RgbImage) -> GrayImage {
    GrayImage::from_fn(image.width(), image.height(), |x, y| {
        Luma([ycbcr_pixel(image.get_pixel(x, y).0)[0]])
    })
}

#[inline]
pub fn is_skin_chroma(cb: u8, cr: u8) -> bool {
    SKIN_CB.contains(&cb) && SKIN_CR.contains(&cr)
}

#[inline]
pub fn is_skin_pixel(rgb: [u8; 3]) -> bool {
    let [_, cb, cr] = ycbcr_pixel(rgb);
    is_skin_chroma(cb, cr)
}

pub fn skin_mask(image: &RgbImage) -> SkinMask {
    let bits = image.pixels().map(|p| is_skin_pixel(p.0)).collect();
    BinaryMask::from_bits(image.width(), image.height(), bits)
}

fn linear_lut() -> &'static [f64; 256] {
    static LUT: OnceLock<[f64; 256]> = OnceLock::new();
    LUT.get_or_init(|| {
        let mut lut = [0.0; 256];
        for (i, v) in lut.iter_mut().enumerate() {
            *v = srgb_channel_to_linear(i as f64 / 255.0);
        }
        lut
    })
}

/// IEC 61966-2-1 decoding of a normalized channel value.
#[inline]
pub fn srgb_channel_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
pub fn linear_to_srgb_channel(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

#[inline]
fn lab_f_inv(f: f64) -> f64 {
    let t = f * f * f;
    if t > EPSILON {
        t
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

fn mat3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn srgb_to_lab(rgb: [u8; 3]) -> LabPixel {
    let lut = linear_lut();
    linear_to_lab(rgb.map(|c| lut[c as usize]))
}

/// Lab from linear RGB in [0, 1].
pub fn linear_to_lab(linear: [f64; 3]) -> LabPixel {
    let xyz = mat3(&SRGB_TO_XYZ, linear);
    let fx = lab_f(xyz[0] / D65_WHITE[0]);
    let fy = lab_f(xyz[1] / D65_WHITE[1]);
    let fz = lab_f(xyz[2] / D65_WHITE[2]);
    LabPixel {
        l: (116.0 * fy - 16.0).clamp(0.0, 100.0),
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// Inverse transform to gamma-encoded sRGB in the 0..=255 scale, unclamped.
pub fn lab_to_srgb(lab: LabPixel) -> [f64; 3] {
    let fy = (lab.l + 16.0) / 116.0;
    let fx = fy + lab.a / 500.0;
    let fz = fy - lab.b / 200.0;
    let xyz = [
        lab_f_inv(fx) * D65_WHITE[0],
        lab_f_inv(fy) * D65_WHITE[1],
        lab_f_inv(fz) * D65_WHITE[2],
    ];
    mat3(&XYZ_TO_SRGB, xyz).map(|c| linear_to_srgb_channel(c.max(0.0)) * 255.0)
}

/// Arithmetic mean of L*, a*, b* over the masked pixels.
pub fn mean_lab(image: &RgbImage, mask: &SkinMask) -> Result<LabPixel, ColorError> {
    if mask.dimensions() != image.dimensions() {
        return Err(ColorError::DimensionMismatch {
            mask_w: mask.width(),
            mask_h: mask.height(),
            image_w: image.width(),
            image_h: image.height(),
        });
    }
    let mut sum = [0.0f64; 3];
    let mut n = 0usize;
    for (p, &selected) in image.pixels().zip(mask.bits()) {
        if selected {
            let lab = srgb_to_lab(p.0);
            sum[0] += lab.l;
            sum[1] += lab.a;
            sum[2] += lab.b;
            n += 1;
        }
    }
    if n == 0 {
        return Err(ColorError::EmptyMask);
    }
    let n = n as f64;
    Ok(LabPixel {
        l: sum[0] / n,
        a: sum[1] / n,
        b: sum[2] / n,
    })
}
