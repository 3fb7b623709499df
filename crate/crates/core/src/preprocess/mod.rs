//! Standardized preprocessing chain and train/eval transforms.
//!
//! The chain operates on 8-bit RGB throughout and normalizes last:
//! resize → non-local means → gamma → CLAHE on L* → hair suppression →
//! channel normalization.

pub mod augment;
pub mod clahe;
pub mod morphology;
pub mod nlm;
pub mod resize;

use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use augment::{color_jitter, AugmentParams, CropWindow};
pub use clahe::{clahe_lightness, ClaheParams};
pub use morphology::{black_hat, remove_hair, HairParams, HairRemoval};
pub use nlm::{nl_means, NlmParams};
pub use resize::{center_crop, crop, resize_bilinear};

pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];
pub const GAMMA_RANGE: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("hair/artefact suppression flagged {:.1}% of pixels (limit {:.1}%)", .fraction * 100.0, .limit * 100.0)]
    ArtifactRejection { fraction: f64, limit: f64 },
    #[error("invalid preprocessing config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    Fixed,
    #[default]
    Adaptive,
}

/// Whether train-time augmentation runs on the preprocessed image or on the
/// raw image before the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOrder {
    #[default]
    AfterPreprocess,
    BeforePreprocess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub target_size: u32,
    pub eval_resize: u32,
    pub gamma_mode: GammaMode,
    /// Exponent used when `gamma_mode` is fixed.
    pub gamma: f64,
    pub clahe_clip: f64,
    pub clahe_tiles: (u32, u32),
    pub nlm_strength: f32,
    pub nlm_patch: usize,
    pub nlm_search: usize,
    pub hair_kernel: u32,
    pub hair_threshold: u8,
    pub hair_max_fraction: f64,
    pub seed: u64,
    pub augment_order: AugmentOrder,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_size: 224,
            eval_resize: 256,
            gamma_mode: GammaMode::Adaptive,
            gamma: 1.0,
            clahe_clip: 2.0,
            clahe_tiles: (8, 8),
            nlm_strength: 10.0,
            nlm_patch: 7,
            nlm_search: 21,
            hair_kernel: 17,
            hair_threshold: 10,
            hair_max_fraction: 0.40,
            seed: 42,
            augment_order: AugmentOrder::AfterPreprocess,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let bad = |m: &str| Err(PreprocessError::InvalidConfig(m.to_string()));
        if self.target_size == 0 || self.eval_resize == 0 {
            return bad("sizes must be positive");
        }
        if self.target_size > self.eval_resize {
            return bad("target_size must not exceed eval_resize");
        }
        if !(self.clahe_clip > 0.0) || self.clahe_tiles.0 == 0 || self.clahe_tiles.1 == 0 {
            return bad("CLAHE clip and tile grid must be positive");
        }
        if !(self.nlm_strength > 0.0) {
            return bad("nlm_strength must be positive");
        }
        if self.nlm_patch % 2 == 0 || self.nlm_search % 2 == 0 {
            return bad("NLM patch and search sizes must be odd");
        }
        if self.hair_kernel % 2 == 0 {
            return bad("hair_kernel must be odd");
        }
        if !(self.hair_max_fraction > 0.0 && self.hair_max_fraction <= 1.0) {
            return bad("hair_max_fraction must lie in (0, 1]");
        }
        if self.gamma_mode == GammaMode::Fixed && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("fixed gamma must be positive");
        }
        Ok(())
    }

    pub fn nlm_params(&self) -> NlmParams {
        NlmParams {
            patch: self.nlm_patch,
            search: self.nlm_search,
            h: self.nlm_strength,
        }
    }

    pub fn clahe_params(&self) -> ClaheParams {
        ClaheParams {
            clip_limit: self.clahe_clip,
            tiles: self.clahe_tiles,
        }
    }

    pub fn hair_params(&self) -> HairParams {
        HairParams {
            kernel: self.hair_kernel,
            threshold: self.hair_threshold,
            max_fraction: self.hair_max_fraction,
        }
    }
}

/// Three channel planes of `(v/255 − mean_c) / std_c`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pub width: u32,
    pub height: u32,
    pub channels: [Vec<f32>; 3],
}

impl NormalizedImage {
    pub fn get(&self, channel: usize, x: u32, y: u32) -> f32 {
        self.channels[channel][(y * self.width + x) as usize]
    }

    pub fn denormalize(&self) -> RgbImage {
        RgbImage::from_fn(self.width, self.height, |x, y| {
            Rgb(std::array::from_fn(|c| {
                let v = (self.get(c, x, y) * IMAGENET_STD[c] + IMAGENET_MEAN[c]) * 255.0;
                v.round().clamp(0.0, 255.0) as u8
            }))
        })
    }
}

pub fn normalize(image: &RgbImage) -> NormalizedImage {
    let channels = std::array::from_fn(|c| {
        image
            .pixels()
            .map(|p| (p.0[c] as f32 / 255.0 - IMAGENET_MEAN[c]) / IMAGENET_STD[c])
            .collect()
    });
    NormalizedImage {
        width: image.width(),
        height: image.height(),
        channels,
    }
}

pub fn mean_luma(image: &RgbImage) -> f64 {
    let n = image.width() as f64 * image.height() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let sum: f64 = image
        .pixels()
        .map(|p| 0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64)
        .sum();
    sum / n
}

/// Exponent that maps the mean luminance to mid-scale, clamped to
/// [0.5, 2]. All-black or all-white images get 1.
pub fn adaptive_gamma(mean_luma: f64) -> f64 {
    if !(mean_luma > 0.0 && mean_luma < 255.0) {
        return 1.0;
    }
    let g = 0.5f64.ln() / (mean_luma / 255.0).ln();
    g.clamp(GAMMA_RANGE.0, GAMMA_RANGE.1)
}

/// Applies `255·(v/255)^gamma` per channel.
pub fn gamma_correct(image: &RgbImage, gamma: f64) -> RgbImage {
    if gamma == 1.0 {
        return image.clone();
    }
    let lut: [u8; 256] = std::array::from_fn(|v| {
        crate::colorspace::quantize(255.0 * (v as f64 / 255.0).powf(gamma))
    });
    let mut out = image.clone();
    for p in out.pixels_mut() {
        p.0 = p.0.map(|v| lut[v as usize]);
    }
    out
}

/// Runs the 8-bit part of the chain and returns the image before
/// normalization.
pub fn preprocess_rgb(image: &RgbImage, cfg: &PreprocessConfig) -> Result<RgbImage, PreprocessError> {
    cfg.validate()?;
    let resized = resize_bilinear(image, cfg.target_size, cfg.target_size);
    let denoised = nl_means(&resized, &cfg.nlm_params());
    let gamma = match cfg.gamma_mode {
        GammaMode::Fixed => cfg.gamma,
        GammaMode::Adaptive => adaptive_gamma(mean_luma(&denoised)),
    };
    let corrected = gamma_correct(&denoised, gamma);
    let equalized = clahe_lightness(&corrected, &cfg.clahe_params());
    let hair = remove_hair(&equalized, &cfg.hair_params());
    if hair.flagged_fraction > cfg.hair_max_fraction {
        return Err(PreprocessError::ArtifactRejection {
            fraction: hair.flagged_fraction,
            limit: cfg.hair_max_fraction,
        });
    }
    Ok(hair.image)
}

pub fn preprocess(image: &RgbImage, cfg: &PreprocessConfig) -> Result<NormalizedImage, PreprocessError> {
    preprocess_rgb(image, cfg).map(|rgb| normalize(&rgb))
}

/// Resize to 256², centre-crop 224², normalize.
pub fn eval_transform(image: &RgbImage) -> NormalizedImage {
    eval_transform_with(image, &PreprocessConfig::default())
}

pub fn eval_transform_with(image: &RgbImage, cfg: &PreprocessConfig) -> NormalizedImage {
    let resized = resize_bilinear(image, cfg.eval_resize, cfg.eval_resize);
    normalize(&center_crop(&resized, cfg.target_size))
}

/// Random resized crop to 224², independent flips and colour jitter.
pub fn train_augment<R: Rng + ?Sized>(image: &RgbImage, rng: &mut R) -> RgbImage {
    train_augment_sized(image, 224, rng)
}

pub fn train_augment_sized<R: Rng + ?Sized>(image: &RgbImage, size: u32, rng: &mut R) -> RgbImage {
    AugmentParams::sample(rng, image.width(), image.height()).apply(image, size)
}

/// One augmented training copy, with the stream keyed by image id and copy
/// index so output does not depend on processing order.
pub fn augmented_copy(
    image: &RgbImage,
    cfg: &PreprocessConfig,
    image_id: &str,
    copy: usize,
) -> Result<RgbImage, PreprocessError> {
    let mut rng = crate::seed::rng_for(cfg.seed, &format!("augment/{image_id}/{copy}"));
    match cfg.augment_order {
        AugmentOrder::AfterPreprocess => {
            let pre = preprocess_rgb(image, cfg)?;
            Ok(train_augment_sized(&pre, cfg.target_size, &mut rng))
        }
        AugmentOrder::BeforePreprocess => {
            let aug = train_augment_sized(image, cfg.target_size, &mut rng);
            preprocess_rgb(&aug, cfg)
        }
    }
}
