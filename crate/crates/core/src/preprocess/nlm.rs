//! Non-local means denoising for RGB images.
//!
//! Patch distances are the per-channel mean squared difference over a square
//! patch. For every search offset the squared-difference image is box-filtered
//! with a summed-area table, so the cost is O(pixels × search area).

use image::RgbImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlmParams {
    /// Odd patch side (7 → 7×7).
    pub patch: usize,
    /// Odd search-window side (21 → 21×21).
    pub search: usize,
    /// Filtering strength on the 8-bit scale.
    pub h: f32,
}

impl Default for NlmParams {
    fn default() -> Self {
        Self {
            patch: 7,
            search: 21,
            h: 10.0,
        }
    }
}

pub fn nl_means(image: &RgbImage, params: &NlmParams) -> RgbImage {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let n = w * h;
    if n == 0 {
        return image.clone();
    }
    let raw = image.as_raw();
    let planes: [Vec<f32>; 3] =
        std::array::from_fn(|c| (0..n).map(|i| raw[i * 3 + c] as f32).collect());

    let pr = (params.patch / 2) as isize;
    let sr = (params.search / 2) as isize;
    let inv_h2 = 1.0 / (params.h * params.h).max(f32::MIN_POSITIVE);

    let mut num = [vec![0f32; n], vec![0f32; n], vec![0f32; n]];
    let mut den = vec![0f32; n];
    let mut diff = vec![0f32; n];
    let mut sat = vec![0f64; (w + 1) * (h + 1)];

    for oy in -sr..=sr {
        for ox in -sr..=sr {
            // Squared difference against the offset image, neighbour clamped.
            for y in 0..h {
                let ny = (y as isize + oy).clamp(0, h as isize - 1) as usize;
                for x in 0..w {
                    let nx = (x as isize + ox).clamp(0, w as isize - 1) as usize;
                    let (i, j) = (y * w + x, ny * w + nx);
                    let mut d = 0.0;
                    for p in &planes {
                        let t = p[i] - p[j];
                        d += t * t;
                    }
                    diff[i] = d / 3.0;
                }
            }
            summed_area(&diff, w, h, &mut sat);
            for y in 0..h {
                let ny = y as isize + oy;
                if ny < 0 || ny >= h as isize {
                    continue;
                }
                let y0 = (y as isize - pr).max(0) as usize;
                let y1 = ((y as isize + pr) as usize).min(h - 1) + 1;
                for x in 0..w {
                    let nx = x as isize + ox;
                    if nx < 0 || nx >= w as isize {
                        continue;
                    }
                    let x0 = (x as isize - pr).max(0) as usize;
                    let x1 = ((x as isize + pr) as usize).min(w - 1) + 1;
                    let area = ((y1 - y0) * (x1 - x0)) as f64;
                    let s = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1]
                        - sat[y1 * (w + 1) + x0]
                        + sat[y0 * (w + 1) + x0];
                    let dist = (s / area).max(0.0) as f32;
                    let weight = (-dist * inv_h2).exp();
                    let (i, j) = (y * w + x, ny as usize * w + nx as usize);
                    den[i] += weight;
                    for c in 0..3 {
                        num[c][i] += weight * planes[c][j];
                    }
                }
            }
        }
    }

    let mut out = RgbImage::new(w as u32, h as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        for c in 0..3 {
            // The zero offset always contributes weight 1, so den >= 1.
            px.0[c] = (num[c][i] / den[i]).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

fn summed_area(src: &[f32], w: usize, h: usize, sat: &mut [f64]) {
    let stride = w + 1;
    for x in 0..=w {
        sat[x] = 0.0;
    }
    for y in 0..h {
        let mut row = 0.0f64;
        sat[(y + 1) * stride] = 0.0;
        for x in 0..w {
            row += src[y * w + x] as f64;
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
        }
    }
}
