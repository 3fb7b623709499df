//! Contrast-limited adaptive histogram equalization on CIELAB lightness.

use image::{Rgb, RgbImage};

use crate::colorspace::{lab_to_srgb, quantize, srgb_to_lab, LabPixel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    /// Clip limit as a multiple of the mean bin height.
    pub clip_limit: f64,
    /// Tile grid (columns, rows).
    pub tiles: (u32, u32),
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            clip_limit: 2.0,
            tiles: (8, 8),
        }
    }
}

const BINS: usize = 256;

/// Builds the clipped-and-redistributed mapping for one tile's histogram.
/// A tile containing a single lightness level keeps the identity mapping.
fn tile_lut(hist: &[u32; BINS], clip_limit: f64) -> [f64; BINS] {
    let area: u32 = hist.iter().sum();
    let occupied = hist.iter().filter(|&&c| c > 0).count();
    let mut lut = [0.0; BINS];
    if area == 0 || occupied <= 1 {
        for (i, v) in lut.iter_mut().enumerate() {
            *v = i as f64;
        }
        return lut;
    }
    let limit = (clip_limit * area as f64 / BINS as f64).max(1.0);
    let mut clipped = [0.0f64; BINS];
    let mut excess = 0.0;
    for (c, &h) in clipped.iter_mut().zip(hist) {
        let h = h as f64;
        if h > limit {
            excess += h - limit;
            *c = limit;
        } else {
            *c = h;
        }
    }
    let share = excess / BINS as f64;
    let scale = 255.0 / area as f64;
    let mut cdf = 0.0;
    for (v, c) in lut.iter_mut().zip(clipped) {
        cdf += c + share;
        *v = (cdf * scale).min(255.0);
    }
    lut
}

fn tile_bounds(len: u32, tiles: u32, i: u32) -> (usize, usize) {
    let a = (i as u64 * len as u64 / tiles as u64) as usize;
    let b = ((i as u64 + 1) * len as u64 / tiles as u64) as usize;
    (a, b)
}

/// Equalizes the L* channel tile by tile and blends neighbouring tile
/// mappings bilinearly. a* and b* are kept; pixels whose lightness mapping is
/// unchanged are copied through untouched.
pub fn clahe_lightness(image: &RgbImage, params: &ClaheParams) -> RgbImage {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return image.clone();
    }
    let tx = params.tiles.0.clamp(1, w);
    let ty = params.tiles.1.clamp(1, h);

    let labs: Vec<LabPixel> = image.pixels().map(|p| srgb_to_lab(p.0)).collect();
    let scaled: Vec<f64> = labs.iter().map(|l| l.l * 255.0 / 100.0).collect();
    let bins: Vec<usize> = scaled
        .iter()
        .map(|&s| s.round().clamp(0.0, 255.0) as usize)
        .collect();

    let mut luts = Vec::with_capacity((tx * ty) as usize);
    for j in 0..ty {
        let (y0, y1) = tile_bounds(h, ty, j);
        for i in 0..tx {
            let (x0, x1) = tile_bounds(w, tx, i);
            let mut hist = [0u32; BINS];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bins[y * w as usize + x]] += 1;
                }
            }
            luts.push(tile_lut(&hist, params.clip_limit));
        }
    }

    let tile_w = w as f64 / tx as f64;
    let tile_h = h as f64 / ty as f64;
    let neighbours = |pos: f64, size: f64, count: u32| {
        let t = (pos + 0.5) / size - 0.5;
        let t = t.clamp(0.0, (count - 1) as f64);
        let a = t.floor() as usize;
        let b = (a + 1).min(count as usize - 1);
        (a, b, t - a as f64)
    };

    let mut out = image.clone();
    for y in 0..h as usize {
        let (j0, j1, fy) = neighbours(y as f64, tile_h, ty);
        for x in 0..w as usize {
            let (i0, i1, fx) = neighbours(x as f64, tile_w, tx);
            let idx = y * w as usize + x;
            let bin = bins[idx];
            let l = |j: usize, i: usize| luts[j * tx as usize + i][bin];
            let top = l(j0, i0) + fx * (l(j0, i1) - l(j0, i0));
            let bottom = l(j1, i0) + fx * (l(j1, i1) - l(j1, i0));
            let mapped = top + fy * (bottom - top);
            let delta = mapped - bin as f64;
            if delta == 0.0 {
                continue;
            }
            let lab = labs[idx];
            let new_l = ((scaled[idx] + delta).clamp(0.0, 255.0)) * 100.0 / 255.0;
            let rgb = lab_to_srgb(LabPixel { l: new_l, ..lab });
            out.put_pixel(x as u32, y as u32, Rgb(rgb.map(quantize)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Chi-square distance of a 16-bin gray histogram to the uniform one.
    fn chi_to_uniform(values: &[u8]) -> f64 {
        let mut h = [0.0f64; 16];
        for &v in values {
            h[v as usize / 16] += 1.0;
        }
        let n = values.len() as f64;
        h.iter()
            .map(|&c| {
                let p = c / n;
                let u = 1.0 / 16.0;
                0.5 * (p - u).powi(2) / (p + u)
            })
            .sum()
    }

    #[test]
    fn constant_image_unchanged() {
        for v in [0u8, 37, 128, 255] {
            let img = RgbImage::from_pixel(50, 40, Rgb([v, v, v]));
            assert_eq!(clahe_lightness(&img, &ClaheParams::default()), img);
        }
        let skin = RgbImage::from_pixel(64, 64, Rgb([200, 150, 120]));
        assert_eq!(clahe_lightness(&skin, &ClaheParams::default()), skin);
    }

    #[test]
    fn low_contrast_checkerboard_flattens_tile_histograms() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let img = RgbImage::from_fn(64, 64, |x, y| {
            let base = if (x / 4 + y / 4) % 2 == 0 { 100 } else { 130 };
            let v = base + rng.gen_range(0..12u8);
            Rgb([v, v, v])
        });
        let params = ClaheParams {
            clip_limit: 2.0,
            tiles: (4, 4),
        };
        let out = clahe_lightness(&img, &params);
        for ty in 0..4 {
            for tx in 0..4 {
                let gather = |im: &RgbImage| -> Vec<u8> {
                    (ty * 16..ty * 16 + 16)
                        .flat_map(|y| (tx * 16..tx * 16 + 16).map(move |x| (x, y)))
                        .map(|(x, y)| im.get_pixel(x, y).0[1])
                        .collect()
                };
                let before = chi_to_uniform(&gather(&img));
                let after = chi_to_uniform(&gather(&out));
                assert!(after < before, "tile ({tx},{ty}): {after} >= {before}");
            }
        }
    }

    #[test]
    fn lut_is_monotone() {
        let mut hist = [0u32; BINS];
        hist[10] = 500;
        hist[11] = 3;
        hist[200] = 40;
        let lut = tile_lut(&hist, 2.0);
        assert!(lut.windows(2).all(|w| w[0] <= w[1]));
        assert!(lut[255] <= 255.0);
    }
}
