//! Statistical validation of synthetic images against a real reference set.
//!
//! Each candidate is compared with the reference on three axes: RGB colour
//! histograms (chi-square distance to the pooled reference histogram), best
//! structural similarity against a seeded reference subsample, and GLCM
//! texture features standardized against the reference distribution.

mod glcm;
mod histogram;
mod ssim;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use image::{imageops::FilterType, GrayImage, RgbImage};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colorspace;

pub use glcm::{glcm_features, glcm_features_with, GlcmFeatures, FEATURE_NAMES, GLCM_ANGLES};
pub use histogram::{hist_distance, rgb_histograms};
pub use ssim::{ssim, C1, C2, SSIM_WINDOW};

#[derive(Debug, Error)]
pub enum SynthValError {
    #[error("histograms have different bin counts ({left} vs {right})")]
    BinMismatch { left: usize, right: usize },
    #[error("image dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("reference set is empty")]
    EmptyReference,
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("report CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Every tunable of the validator. All values are echoed into report headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthThresholds {
    pub hist_bins: usize,
    /// Maximum chi-square histogram distance per channel.
    pub tau_hist: f64,
    /// Minimum best-match SSIM.
    pub tau_ssim: f64,
    /// Maximum absolute GLCM z-score.
    pub tau_glcm: f64,
    /// Reference subsample size for the SSIM search.
    pub ssim_sample: usize,
    pub glcm_levels: usize,
    /// Side of the square grayscale working image used for SSIM and GLCM.
    pub working_size: u32,
    pub seed: u64,
}

impl Default for SynthThresholds {
    fn default() -> Self {
        Self {
            hist_bins: 32,
            tau_hist: 0.5,
            tau_ssim: 0.2,
            tau_glcm: 3.0,
            ssim_sample: 32,
            glcm_levels: 64,
            working_size: 128,
            seed: 42,
        }
    }
}

impl SynthThresholds {
    pub fn validate(&self) -> Result<(), SynthValError> {
        let bad = |m: &str| Err(SynthValError::InvalidThresholds(m.to_string()));
        if self.hist_bins < 2 || self.hist_bins > 256 {
            return bad("hist_bins must lie in [2, 256]");
        }
        if !(2..=256).contains(&self.glcm_levels) {
            return bad("glcm_levels must lie in [2, 256]");
        }
        if self.ssim_sample == 0 || self.working_size == 0 {
            return bad("ssim_sample and working_size must be positive");
        }
        if !(self.tau_hist >= 0.0 && self.tau_glcm > 0.0 && self.tau_ssim.abs() <= 1.0) {
            return bad("thresholds out of range");
        }
        Ok(())
    }

    pub fn header_notes(&self) -> Vec<(String, String)> {
        vec![
            ("hist_distance".into(), "chi_square".into()),
            ("hist_bins".into(), self.hist_bins.to_string()),
            ("tau_hist".into(), self.tau_hist.to_string()),
            ("tau_ssim".into(), self.tau_ssim.to_string()),
            ("tau_glcm".into(), self.tau_glcm.to_string()),
            ("ssim_sample".into(), self.ssim_sample.to_string()),
            ("ssim_window".into(), SSIM_WINDOW.to_string()),
            ("glcm_levels".into(), self.glcm_levels.to_string()),
            ("glcm_distance".into(), "1".into()),
            ("glcm_angles".into(), "0,45,90,135".into()),
            ("working_size".into(), self.working_size.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accept" => Ok(Verdict::Accept),
            "reject" => Ok(Verdict::Reject),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

/// Grayscale working image: BT.601 luma resized to `size`².
pub fn working_gray(image: &RgbImage, size: u32) -> GrayImage {
    let gray = colorspace::luma(image);
    if gray.dimensions() == (size, size) {
        gray
    } else {
        image::imageops::resize(&gray, size, size, FilterType::Triangle)
    }
}

/// Precomputed, read-only statistics of the real reference set.
#[derive(Debug, Clone)]
pub struct ReferenceStats {
    pub thresholds: SynthThresholds,
    pub count: usize,
    /// Mean of the per-image normalized histograms.
    pub pooled_hist: [Vec<f64>; 3],
    pub glcm_mean: [f64; 4],
    /// Population standard deviation of each GLCM feature.
    pub glcm_std: [f64; 4],
    /// Working images of the seeded SSIM subsample.
    pub ssim_refs: Vec<GrayImage>,
}

impl ReferenceStats {
    pub fn build(reference: &[RgbImage], thresholds: &SynthThresholds) -> Result<Self, SynthValError> {
        thresholds.validate()?;
        if reference.is_empty() {
            return Err(SynthValError::EmptyReference);
        }
        let n = reference.len();
        let per_image: Vec<([Vec<f64>; 3], GrayImage, [f64; 4])> = reference
            .par_iter()
            .map(|img| {
                let hist = rgb_histograms(img, thresholds.hist_bins);
                let gray = working_gray(img, thresholds.working_size);
                let feats = glcm_features(&gray, thresholds.glcm_levels).to_array();
                (hist, gray, feats)
            })
            .collect();

        let mut pooled = [
            vec![0.0; thresholds.hist_bins],
            vec![0.0; thresholds.hist_bins],
            vec![0.0; thresholds.hist_bins],
        ];
        let mut mean = [0.0; 4];
        for (hist, _, feats) in &per_image {
            for c in 0..3 {
                for (p, v) in pooled[c].iter_mut().zip(&hist[c]) {
                    *p += v / n as f64;
                }
            }
            for k in 0..4 {
                mean[k] += feats[k] / n as f64;
            }
        }
        let mut std = [0.0; 4];
        for (_, _, feats) in &per_image {
            for k in 0..4 {
                std[k] += (feats[k] - mean[k]).powi(2) / n as f64;
            }
        }
        let std = std.map(f64::sqrt);

        let picked: Vec<usize> = if n <= thresholds.ssim_sample {
            (0..n).collect()
        } else {
            let mut rng = crate::seed::rng_for(thresholds.seed, "synthval/ssim-reference");
            let mut idx = sample(&mut rng, n, thresholds.ssim_sample).into_vec();
            idx.sort_unstable();
            idx
        };
        let ssim_refs = picked.into_iter().map(|i| per_image[i].1.clone()).collect();

        Ok(Self {
            thresholds: thresholds.clone(),
            count: n,
            pooled_hist: pooled,
            glcm_mean: mean,
            glcm_std: std,
            ssim_refs,
        })
    }

    /// Standardized deviation; a feature with no spread in the reference
    /// scores 0 when it matches and ±inf otherwise.
    pub fn z_scores(&self, feats: &GlcmFeatures) -> [f64; 4] {
        let v = feats.to_array();
        std::array::from_fn(|k| {
            let d = v[k] - self.glcm_mean[k];
            if self.glcm_std[k] > 1e-12 {
                d / self.glcm_std[k]
            } else if d.abs() <= 1e-12 {
                0.0
            } else {
                d.signum() * f64::INFINITY
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthValidationReport {
    pub image_id: String,
    pub hist_distance: [f64; 3],
    pub ssim_max: f64,
    pub glcm: GlcmFeatures,
    pub glcm_z: [f64; 4],
    pub verdict: Verdict,
    pub reasons: Vec<String>,
}

impl SynthValidationReport {
    /// Report for a candidate that could not be decoded.
    pub fn unreadable(image_id: &str, detail: &str) -> Self {
        Self {
            image_id: image_id.to_string(),
            hist_distance: [f64::NAN; 3],
            ssim_max: f64::NAN,
            glcm: GlcmFeatures::from_array([f64::NAN; 4]),
            glcm_z: [f64::NAN; 4],
            verdict: Verdict::Reject,
            reasons: vec![format!("unreadable: {detail}")],
        }
    }
}

pub fn validate_synthetic(
    image_id: &str,
    candidate: &RgbImage,
    reference: &ReferenceStats,
) -> SynthValidationReport {
    let t = &reference.thresholds;
    let hist = rgb_histograms(candidate, t.hist_bins);
    let hist_distance: [f64; 3] = std::array::from_fn(|c| {
        hist_distance(&hist[c], &reference.pooled_hist[c]).expect("bin counts agree")
    });
    let gray = working_gray(candidate, t.working_size);
    let ssim_max = reference
        .ssim_refs
        .iter()
        .map(|r| ssim(&gray, r).expect("working images share a size"))
        .fold(f64::NEG_INFINITY, f64::max);
    let glcm = glcm_features(&gray, t.glcm_levels);
    let glcm_z = reference.z_scores(&glcm);

    let mut reasons = Vec::new();
    for (c, d) in ["r", "g", "b"].iter().zip(hist_distance) {
        if d > t.tau_hist {
            reasons.push(format!("hist_d_{c}={d:.4}>{}", t.tau_hist));
        }
    }
    if ssim_max < t.tau_ssim {
        reasons.push(format!("ssim_max={ssim_max:.4}<{}", t.tau_ssim));
    }
    for (name, z) in FEATURE_NAMES.iter().zip(glcm_z) {
        if z.abs() > t.tau_glcm {
            reasons.push(format!("z_{name}={z:.3}>|{}|", t.tau_glcm));
        }
    }
    let verdict = if reasons.is_empty() {
        Verdict::Accept
    } else {
        Verdict::Reject
    };
    SynthValidationReport {
        image_id: image_id.to_string(),
        hist_distance,
        ssim_max,
        glcm,
        glcm_z,
        verdict,
        reasons,
    }
}

/// Flat CSV row of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub image_id: String,
    pub hist_d_r: f64,
    pub hist_d_g: f64,
    pub hist_d_b: f64,
    pub ssim_max: f64,
    pub glcm_contrast: f64,
    pub glcm_energy: f64,
    pub glcm_homogeneity: f64,
    pub glcm_correlation: f64,
    pub z_contrast: f64,
    pub z_energy: f64,
    pub z_homogeneity: f64,
    pub z_correlation: f64,
    pub verdict: Verdict,
    pub reasons: String,
}

impl From<&SynthValidationReport> for ReportRow {
    fn from(r: &SynthValidationReport) -> Self {
        Self {
            image_id: r.image_id.clone(),
            hist_d_r: r.hist_distance[0],
            hist_d_g: r.hist_distance[1],
            hist_d_b: r.hist_distance[2],
            ssim_max: r.ssim_max,
            glcm_contrast: r.glcm.contrast,
            glcm_energy: r.glcm.energy,
            glcm_homogeneity: r.glcm.homogeneity,
            glcm_correlation: r.glcm.correlation,
            z_contrast: r.glcm_z[0],
            z_energy: r.glcm_z[1],
            z_homogeneity: r.glcm_z[2],
            z_correlation: r.glcm_z[3],
            verdict: r.verdict,
            reasons: r.reasons.join(";"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VerdictCounts {
    pub candidates: usize,
    pub accepted: usize,
    pub rejected: usize,
}

pub fn verdict_counts(reports: &[SynthValidationReport]) -> VerdictCounts {
    let accepted = reports.iter().filter(|r| r.verdict == Verdict::Accept).count();
    VerdictCounts {
        candidates: reports.len(),
        accepted,
        rejected: reports.len() - accepted,
    }
}

/// Writes `# key=value` header lines (thresholds, reference size, pre/post
/// filter counts) followed by one CSV row per report.
pub fn write_report<W: Write>(
    mut w: W,
    reports: &[SynthValidationReport],
    reference: &ReferenceStats,
    extra_notes: &[(String, String)],
) -> Result<(), SynthValError> {
    let counts = verdict_counts(reports);
    let mut notes = reference.thresholds.header_notes();
    notes.push(("reference_images".into(), reference.count.to_string()));
    notes.push(("ssim_reference_images".into(), reference.ssim_refs.len().to_string()));
    notes.push(("candidates_pre_filter".into(), counts.candidates.to_string()));
    notes.push(("accepted_post_filter".into(), counts.accepted.to_string()));
    notes.push(("rejected".into(), counts.rejected.to_string()));
    notes.extend(extra_notes.iter().cloned());
    for (k, v) in notes {
        writeln!(w, "# {k}={v}")?;
    }
    let mut csv = csv::Writer::from_writer(w);
    for r in reports {
        csv.serialize(ReportRow::from(r))?;
    }
    if reports.is_empty() {
        csv.write_record([
            "image_id", "hist_d_r", "hist_d_g", "hist_d_b", "ssim_max", "glcm_contrast",
            "glcm_energy", "glcm_homogeneity", "glcm_correlation", "z_contrast", "z_energy",
            "z_homogeneity", "z_correlation", "verdict", "reasons",
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_report<R: BufRead>(r: R) -> Result<Vec<ReportRow>, SynthValError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}
