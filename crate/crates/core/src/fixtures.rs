//! Deterministic generator for a small dermoscopy-like test corpus.
//!
//! The corpus mirrors the on-disk layout of a real run: an ISIC-style
//! metadata CSV with images and ground-truth masks, a synthetic directory
//! with its generator sidecar, a classification prediction file and a
//! training log.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::image_io::{self, ImageIoError};

pub const REAL_IMAGES: usize = 48;
pub const DARK_REAL_IMAGES: usize = 16;
pub const SYNTHETIC_IMAGES: usize = 16;
/// Synthetic images generated as deliberate outliers.
pub const SYNTHETIC_OUTLIERS: usize = 2;

const LIGHT_SKIN: [f64; 3] = [232.0, 192.0, 168.0];
const MEDIUM_SKIN: [f64; 3] = [190.0, 140.0, 105.0];
const DARK_SKIN: [f64; 3] = [96.0, 62.0, 46.0];

const DIAGNOSES: [&str; 8] = [
    "melanoma",
    "nevus",
    "basal cell carcinoma",
    "seborrheic keratosis",
    "nevus",
    "actinic keratosis",
    "dermatofibroma",
    "vascular lesion",
];

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Image(#[from] ImageIoError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FixtureError + '_ {
    move |source| FixtureError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Paths of a generated corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub metadata: PathBuf,
    pub images: PathBuf,
    pub masks: PathBuf,
    pub synthetic: PathBuf,
    pub predictions: PathBuf,
    pub training_log: PathBuf,
}

impl Corpus {
    pub fn at(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            metadata: root.join("metadata.csv"),
            images: root.join("images"),
            masks: root.join("masks"),
            synthetic: root.join("synthetic"),
            predictions: root.join("predictions.csv"),
            training_log: root.join("training_log.csv"),
        }
    }
}

/// A lesion scene: skin background with one elliptical lesion.
#[derive(Debug, Clone, Copy)]
pub struct LesionScene {
    pub width: u32,
    pub height: u32,
    pub skin: [f64; 3],
    pub lesion: [f64; 3],
    pub center: (f64, f64),
    pub axes: (f64, f64),
    pub angle: f64,
    pub noise: f64,
}

impl LesionScene {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        let (dx, dy) = (x as f64 + 0.5 - self.center.0, y as f64 + 0.5 - self.center.1);
        let (s, c) = self.angle.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.axes.0).powi(2) + (v / self.axes.1).powi(2) <= 1.0
    }

    pub fn render<R: Rng + ?Sized>(&self, rng: &mut R) -> RgbImage {
        let noise = Normal::new(0.0, self.noise.max(1e-9)).expect("positive std");
        let mut img = RgbImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let base = if self.contains(x, y) { self.lesion } else { self.skin };
                // Gentle vignetting, as under a dermatoscope.
                let r = ((x as f64 / self.width as f64 - 0.5).powi(2)
                    + (y as f64 / self.height as f64 - 0.5).powi(2))
                .sqrt();
                let shade = 1.0 - 0.12 * r;
                let px = base.map(|b| (b * shade + noise.sample(rng)).round().clamp(0.0, 255.0) as u8);
                img.put_pixel(x, y, Rgb(px));
            }
        }
        img
    }

    pub fn mask(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| Luma([if self.contains(x, y) { 255 } else { 0 }]))
    }
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    std::array::from_fn(|c| a[c] + (b[c] - a[c]) * t)
}

fn random_scene<R: Rng + ?Sized>(rng: &mut R, skin: [f64; 3], width: u32, height: u32) -> LesionScene {
    let darkening = rng.gen_range(0.35..0.55);
    let lesion = skin.map(|c| c * darkening);
    let (w, h) = (width as f64, height as f64);
    LesionScene {
        width,
        height,
        skin,
        lesion,
        center: (w * rng.gen_range(0.4..0.6), h * rng.gen_range(0.4..0.6)),
        axes: (w * rng.gen_range(0.14..0.22), h * rng.gen_range(0.12..0.2)),
        angle: rng.gen_range(0.0..std::f64::consts::PI),
        noise: rng.gen_range(3.0..7.0),
    }
}

/// Skin colour for real image `i`: the last `DARK_REAL_IMAGES` are dark,
/// the rest sweep from light to medium.
fn real_skin<R: Rng + ?Sized>(rng: &mut R, i: usize) -> [f64; 3] {
    let light_count = REAL_IMAGES - DARK_REAL_IMAGES;
    let base = if i < light_count {
        mix(LIGHT_SKIN, MEDIUM_SKIN, i as f64 / (light_count - 1) as f64)
    } else {
        let t = (i - light_count) as f64 / (DARK_REAL_IMAGES - 1) as f64;
        mix(DARK_SKIN.map(|c| c * 1.15), DARK_SKIN.map(|c| c * 0.9), t)
    };
    base.map(|c| c + rng.gen_range(-3.0..3.0))
}

pub fn real_id(i: usize) -> String {
    format!("ISIC_9{i:06}")
}

pub fn synthetic_id(i: usize) -> String {
    format!("SYN_{i:04}")
}

/// Writes the full corpus under `root` and returns its paths.
pub fn generate_corpus(root: &Path, seed: u64) -> Result<Corpus, FixtureError> {
    let corpus = Corpus::at(root);
    for dir in [&corpus.root, &corpus.images, &corpus.masks, &corpus.synthetic] {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }

    let mut metadata = String::from("image_id,patient_id,diagnosis,anatom_site_general\n");
    let mut predictions = String::from("image_id,score,label\n");
    for i in 0..REAL_IMAGES {
        let id = real_id(i);
        let mut rng = crate::seed::rng_for(seed, &format!("fixture/real/{id}"));
        let skin = real_skin(&mut rng, i);
        let (w, h) = if i % 3 == 0 { (200, 150) } else { (160, 160) };
        let scene = random_scene(&mut rng, skin, w, h);
        image_io::save_rgb(&scene.render(&mut rng), &corpus.images.join(format!("{id}.png")))?;
        image_io::save_gray(&scene.mask(), &corpus.masks.join(format!("{id}_segmentation.png")))?;

        let diagnosis = DIAGNOSES[i % DIAGNOSES.len()];
        // Pairs of consecutive images share a patient; every 12th image has
        // no patient id.
        let patient = if i % 12 == 11 {
            String::new()
        } else {
            format!("IP_{:04}", i / 2)
        };
        metadata.push_str(&format!("{id},{patient},{diagnosis},torso\n"));

        let label = u8::from(matches!(diagnosis, "melanoma" | "nevus"));
        let score: f64 = if label == 1 {
            rng.gen_range(0.35..0.99)
        } else {
            rng.gen_range(0.01..0.65)
        };
        predictions.push_str(&format!("{id},{score:.4},{label}\n"));
    }
    write_text(&corpus.metadata, &metadata)?;
    write_text(&corpus.predictions, &predictions)?;

    let mut sidecar = String::from("image_id,prompt,lesion_superclass,seed\n");
    for i in 0..SYNTHETIC_IMAGES {
        let id = synthetic_id(i);
        let mut rng = crate::seed::rng_for(seed, &format!("fixture/synthetic/{id}"));
        let img = if i < SYNTHETIC_OUTLIERS {
            outlier(&mut rng, i)
        } else {
            let t = rng.gen_range(0.0..1.0);
            let skin = mix(DARK_SKIN.map(|c| c * 1.15), DARK_SKIN.map(|c| c * 0.9), t);
            random_scene(&mut rng, skin, 160, 160).render(&mut rng)
        };
        image_io::save_rgb(&img, &corpus.synthetic.join(format!("{id}.png")))?;
        let superclass = if i % 5 == 0 { "melanocytic" } else { "non_melanocytic" };
        let gen_seed = crate::seed::derive_seed(seed, &id) % 1_000_000;
        sidecar.push_str(&format!(
            "{id},\"dermoscopic image of a {} lesion on dark skin\",{superclass},{gen_seed}\n",
            superclass.replace('_', "-")
        ));
    }
    write_text(&corpus.synthetic.join(crate::dataset::SIDECAR_NAME), &sidecar)?;

    write_text(&corpus.training_log, &training_log_text())?;
    Ok(corpus)
}

/// Images no realistic generator output resembles: a blown-out white frame
/// and saturated colour noise.
fn outlier<R: Rng + ?Sized>(rng: &mut R, kind: usize) -> RgbImage {
    match kind % 2 {
        0 => RgbImage::from_pixel(128, 128, Rgb([252, 252, 252])),
        _ => RgbImage::from_fn(128, 128, |_, _| {
            Rgb([rng.gen_range(0..60), rng.gen_range(180..=255), rng.gen_range(0..60)])
        }),
    }
}

fn training_log_text() -> String {
    let mut s = String::from("epoch,loss_train,loss_val,acc_train,acc_val,auc_val\n");
    let epochs = 10;
    for e in 1..=epochs {
        let t = (e - 1) as f64 / (epochs - 1) as f64;
        let loss_train = 0.62 - 0.40 * t.sqrt();
        let loss_val = 0.58 - 0.33 * t.sqrt();
        let acc_train = 0.71 + 0.24 * t.sqrt();
        let acc_val = 0.74 + 0.18 * t.sqrt();
        let auc = 0.856 + (0.948 - 0.856) * t;
        s.push_str(&format!("{e},{loss_train:.4},{loss_val:.4},{acc_train:.4},{acc_val:.4},{auc:.4}\n"));
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<(), FixtureError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

/// A 224² dark disc of radius 40 on a lighter field with additive Gaussian
/// noise, plus its exact mask.
pub fn noisy_disc<R: Rng + ?Sized>(rng: &mut R, size: u32, radius: f64, inside: f64, outside: f64, sigma: f64) -> (RgbImage, GrayImage) {
    let noise = Normal::new(0.0, sigma.max(1e-9)).expect("positive std");
    let c = size as f64 / 2.0;
    let inside_disc = |x: u32, y: u32| ((x as f64 + 0.5 - c).powi(2) + (y as f64 + 0.5 - c).powi(2)).sqrt() <= radius;
    let mut img = RgbImage::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let base = if inside_disc(x, y) { inside } else { outside };
            let v = (base + noise.sample(rng)).round().clamp(0.0, 255.0) as u8;
            img.put_pixel(x, y, Rgb([v, v, v]));
        }
    }
    let mask = GrayImage::from_fn(size, size, |x, y| Luma([if inside_disc(x, y) { 255 } else { 0 }]));
    (img, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skintone::{analyze_image, Fitzpatrick};

    #[test]
    fn skin_tones_span_light_and_dark() {
        let mut rng = crate::seed::rng_for(1, "t");
        let light = random_scene(&mut rng, LIGHT_SKIN, 160, 160).render(&mut rng);
        let dark = random_scene(&mut rng, DARK_SKIN, 160, 160).render(&mut rng);
        let l = analyze_image(&light);
        let d = analyze_image(&dark);
        assert!(matches!(l.fitzpatrick, Fitzpatrick::I | Fitzpatrick::II), "{l:?}");
        assert!(d.fitzpatrick.is_dark(), "{d:?}");
    }

    #[test]
    fn corpus_layout() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate_corpus(dir.path(), 7).unwrap();
        assert_eq!(fs::read_dir(&c.images).unwrap().count(), REAL_IMAGES);
        assert_eq!(fs::read_dir(&c.masks).unwrap().count(), REAL_IMAGES);
        assert_eq!(fs::read_dir(&c.synthetic).unwrap().count(), SYNTHETIC_IMAGES + 1);
        let meta = fs::read_to_string(&c.metadata).unwrap();
        assert_eq!(meta.lines().count(), REAL_IMAGES + 1);
    }
}
