use image::RgbImage;

use super::SynthValError;

/// Per-channel histograms normalized to unit mass. Value `v` falls into bin
/// `v·bins/256`.
pub fn rgb_histograms(image: &RgbImage, bins: usize) -> [Vec<f64>; 3] {
    assert!(bins >= 2, "need at least two bins");
    let mut h = [vec![0.0; bins], vec![0.0; bins], vec![0.0; bins]];
    for p in image.pixels() {
        for c in 0..3 {
            h[c][p.0[c] as usize * bins / 256] += 1.0;
        }
    }
    let n = image.width() as f64 * image.height() as f64;
    if n > 0.0 {
        for ch in &mut h {
            for v in ch.iter_mut() {
                *v /= n;
            }
        }
    }
    h
}

/// Symmetric chi-square distance `½·Σ (a−b)²/(a+b)`, skipping empty bins.
pub fn hist_distance(a: &[f64], b: &[f64]) -> Result<f64, SynthValError> {
    if a.len() != b.len() {
        return Err(SynthValError::BinMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(0.5
        * a.iter()
            .zip(b)
            .filter(|(x, y)| *x + *y > 0.0)
            .map(|(x, y)| (x - y).powi(2) / (x + y))
            .sum::<f64>())
}
