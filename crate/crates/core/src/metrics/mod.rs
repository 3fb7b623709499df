//! Segmentation and binary-classification scoring.

mod eval;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;

pub use eval::{
    evaluate_classification, evaluate_segmentation, find_truth_mask, read_predictions, ClsEvalReport,
    Prediction, SegEvalReport, SegImageScore, SegMeans,
};

/// Scores at or above this are predicted positive.
pub const DECISION_THRESHOLD: f64 = 0.5;
/// Probability clamp used by the cross-entropy loss.
pub const LOSS_EPS: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mask dimensions differ: prediction {pred:?}, truth {truth:?}")]
    DimensionMismatch { pred: (u32, u32), truth: (u32, u32) },
    #[error("ground-truth mask is empty; overlap metrics are undefined")]
    EmptyTruth,
    #[error("AUC is undefined: all samples belong to one class")]
    SingleClass,
    #[error("no predictions to score")]
    NoSamples,
    #[error("invalid prediction for {id}: {detail}")]
    InvalidPrediction { id: String, detail: String },
    #[error("missing predictions for {} image(s): {}", .0.len(), .0.join(", "))]
    MissingPrediction(Vec<String>),
    #[error("missing ground truth for {} image(s): {}", .0.len(), .0.join(", "))]
    MissingTruth(Vec<String>),
    #[error(transparent)]
    Image(#[from] crate::image_io::ImageIoError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn ratio(num: usize, den: usize) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Option<f64> {
        Self::ratio(self.tn, self.tn + self.fp)
    }

    pub fn accuracy(&self) -> Option<f64> {
        Self::ratio(self.tp + self.tn, self.total())
    }
}

/// Per-image segmentation scores. `precision` and `specificity` are `None`
/// when their denominator is zero; `hausdorff_px` is `+inf` when the
/// prediction is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScores {
    pub iou: f64,
    pub dice: f64,
    pub precision: Option<f64>,
    pub recall: f64,
    pub specificity: Option<f64>,
    pub hausdorff_px: f64,
    pub confusion: Confusion,
}

pub fn confusion_masks(pred: &BinaryMask, truth: &BinaryMask) -> Result<Confusion, MetricsError> {
    if pred.dimensions() != truth.dimensions() {
        return Err(MetricsError::DimensionMismatch {
            pred: pred.dimensions(),
            truth: truth.dimensions(),
        });
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Exact symmetric Hausdorff distance between two point sets in pixels.
/// Empty sets give 0 against each other and `+inf` against a nonempty set.
pub fn hausdorff(a: &[(u32, u32)], b: &[(u32, u32)]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let directed = |from: &[(u32, u32)], to: &[(u32, u32)]| {
        let mut worst = 0i64;
        for &(x, y) in from {
            let mut best = i64::MAX;
            for &(u, v) in to {
                let d = (x as i64 - u as i64).pow(2) + (y as i64 - v as i64).pow(2);
                if d < best {
                    best = d;
                    if best <= worst {
                        // Cannot raise the running maximum any more.
                        break;
                    }
                }
            }
            worst = worst.max(best);
        }
        worst
    };
    let d = directed(a, b).max(directed(b, a));
    (d as f64).sqrt()
}

pub fn seg_scores(pred: &BinaryMask, truth: &BinaryMask) -> Result<SegmentationScores, MetricsError> {
    let c = confusion_masks(pred, truth)?;
    if c.tp + c.fn_ == 0 {
        return Err(MetricsError::EmptyTruth);
    }
    let union = c.tp + c.fp + c.fn_;
    Ok(SegmentationScores {
        iou: c.tp as f64 / union as f64,
        dice: 2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64,
        precision: c.precision(),
        recall: c.recall().expect("truth is nonempty"),
        specificity: c.specificity(),
        hausdorff_px: hausdorff(&pred.boundary(), &truth.boundary()),
        confusion: c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub n: usize,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub confusion: Confusion,
    /// Mean binary cross-entropy of the scores.
    pub loss: f64,
}

/// Area under the ROC curve by trapezoidal integration over tie groups of
/// descending score, which equals pairwise concordance with half credit for
/// ties.
pub fn auc(samples: &[(f64, bool)]) -> Result<f64, MetricsError> {
    let pos = samples.iter().filter(|s| s.1).count();
    let neg = samples.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut sorted: Vec<(f64, bool)> = samples.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let (tp0, fp0) = (tp, fp);
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Trapezoid in unnormalized (fp, tp) space.
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
    }
    Ok(area / (pos as f64 * neg as f64))
}

pub fn bce_loss(samples: &[(f64, bool)]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let total: f64 = samples
        .iter()
        .map(|&(s, y)| {
            let p = s.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / samples.len() as f64
}

pub fn cls_scores(samples: &[(f64, bool)]) -> Result<ClassificationScores, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::NoSamples);
    }
    let mut c = Confusion::default();
    for &(s, y) in samples {
        match (s >= DECISION_THRESHOLD, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let precision = c.precision();
    let recall = c.recall();
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(ClassificationScores {
        n: samples.len(),
        accuracy: c.accuracy().expect("nonempty"),
        precision,
        recall,
        f1,
        auc: auc(samples).ok(),
        confusion: c,
        loss: bce_loss(samples),
    })
}
