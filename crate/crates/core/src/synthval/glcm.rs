use image::GrayImage;
use serde::{Deserialize, Serialize};

/// Pixel offsets (dx, dy) for 0°, 45°, 90° and 135° with y pointing down.
pub const GLCM_ANGLES: [(i32, i32); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlcmFeatures {
    pub contrast: f64,
    pub energy: f64,
    pub homogeneity: f64,
    pub correlation: f64,
}

impl GlcmFeatures {
    /// Features of a matrix with all mass on one diagonal cell.
    pub const CONSTANT: GlcmFeatures = GlcmFeatures {
        contrast: 0.0,
        energy: 1.0,
        homogeneity: 1.0,
        correlation: 1.0,
    };

    pub fn to_array(self) -> [f64; 4] {
        [self.contrast, self.energy, self.homogeneity, self.correlation]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            contrast: v[0],
            energy: v[1],
            homogeneity: v[2],
            correlation: v[3],
        }
    }
}

pub const FEATURE_NAMES: [&str; 4] = ["contrast", "energy", "homogeneity", "correlation"];

/// Symmetric, normalized co-occurrence features at distance `distance`,
/// pooled over the four standard angles.
pub fn glcm_features(image: &GrayImage, levels: usize) -> GlcmFeatures {
    glcm_features_with(image, levels, 1, &GLCM_ANGLES)
}

pub fn glcm_features_with(
    image: &GrayImage,
    levels: usize,
    distance: i32,
    angles: &[(i32, i32)],
) -> GlcmFeatures {
    assert!((2..=256).contains(&levels), "levels must lie in [2, 256]");
    let (w, h) = (image.width() as i32, image.height() as i32);
    let q: Vec<usize> = image
        .as_raw()
        .iter()
        .map(|&v| v as usize * levels / 256)
        .collect();
    let mut m = vec![0.0f64; levels * levels];
    let mut pairs = 0.0;
    for &(dx, dy) in angles {
        let (dx, dy) = (dx * distance, dy * distance);
        for y in 0..h {
            let ny = y + dy;
            if ny < 0 || ny >= h {
                continue;
            }
            for x in 0..w {
                let nx = x + dx;
                if nx < 0 || nx >= w {
                    continue;
                }
                let i = q[(y * w + x) as usize];
                let j = q[(ny * w + nx) as usize];
                m[i * levels + j] += 1.0;
                m[j * levels + i] += 1.0;
                pairs += 2.0;
            }
        }
    }
    if pairs == 0.0 {
        return GlcmFeatures::CONSTANT;
    }
    for v in &mut m {
        *v /= pairs;
    }

    let mut f = GlcmFeatures {
        contrast: 0.0,
        energy: 0.0,
        homogeneity: 0.0,
        correlation: 0.0,
    };
    let (mut mu, mut var) = (0.0, 0.0);
    for i in 0..levels {
        for j in 0..levels {
            let p = m[i * levels + j];
            if p == 0.0 {
                continue;
            }
            let d = (i as f64 - j as f64).powi(2);
            f.contrast += p * d;
            f.energy += p * p;
            f.homogeneity += p / (1.0 + d);
            mu += p * i as f64;
        }
    }
    // The matrix is symmetric, so row and column marginals coincide.
    for i in 0..levels {
        for j in 0..levels {
            let p = m[i * levels + j];
            if p > 0.0 {
                var += p * (i as f64 - mu).powi(2);
            }
        }
    }
    f.correlation = if var <= 1e-12 {
        1.0
    } else {
        let mut cov = 0.0;
        for i in 0..levels {
            for j in 0..levels {
                let p = m[i * levels + j];
                if p > 0.0 {
                    cov += p * (i as f64 - mu) * (j as f64 - mu);
                }
            }
        }
        (cov / var).clamp(-1.0, 1.0)
    };
    f
}
