//! Run-level evaluation: per-image scoring over a directory of masks or a
//! prediction file, corpus means, and report output.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cls_scores, seg_scores, ClassificationScores, MetricsError, SegmentationScores};
use crate::mask::BinaryMask;

/// Ground-truth mask for `id`: `<id>.png` or the ISIC-style
/// `<id>_segmentation.png`.
pub fn find_truth_mask(dir: &Path, id: &str) -> Option<PathBuf> {
    [format!("{id}.png"), format!("{id}_segmentation.png")]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegImageScore {
    pub image_id: String,
    pub scores: SegmentationScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct SegMeans {
    pub mean_iou: f64,
    pub dice: f64,
    /// Mean over images where precision is defined.
    pub precision: Option<f64>,
    pub recall: f64,
    pub specificity: Option<f64>,
    /// Mean over images with a finite distance.
    pub hausdorff_px: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegEvalReport {
    pub images: usize,
    pub means: SegMeans,
    pub precision_undefined: usize,
    pub specificity_undefined: usize,
    /// Images with an empty prediction, left out of the Hausdorff mean.
    pub hausdorff_excluded: Vec<String>,
    /// Images whose ground truth is empty, left out of every mean.
    pub empty_truth: Vec<String>,
    pub per_image: Vec<SegImageScore>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut n, mut s) = (0usize, 0.0);
    for v in values {
        n += 1;
        s += v;
    }
    (n > 0).then(|| s / n as f64)
}

impl SegEvalReport {
    pub fn from_scores(mut per_image: Vec<SegImageScore>, empty_truth: Vec<String>) -> Self {
        per_image.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let s = || per_image.iter().map(|p| &p.scores);
        let means = SegMeans {
            mean_iou: mean(s().map(|x| x.iou)).unwrap_or(f64::NAN),
            dice: mean(s().map(|x| x.dice)).unwrap_or(f64::NAN),
            precision: mean(s().filter_map(|x| x.precision)),
            recall: mean(s().map(|x| x.recall)).unwrap_or(f64::NAN),
            specificity: mean(s().filter_map(|x| x.specificity)),
            hausdorff_px: mean(s().map(|x| x.hausdorff_px).filter(|h| h.is_finite())),
        };
        Self {
            images: per_image.len(),
            means,
            precision_undefined: s().filter(|x| x.precision.is_none()).count(),
            specificity_undefined: s().filter(|x| x.specificity.is_none()).count(),
            hausdorff_excluded: per_image
                .iter()
                .filter(|p| !p.scores.hausdorff_px.is_finite())
                .map(|p| p.image_id.clone())
                .collect(),
            empty_truth,
            per_image,
        }
    }

    pub fn write_per_image_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["image_id", "iou", "dice", "precision", "recall", "specificity", "hausdorff_px"])?;
        for p in &self.per_image {
            let s = &p.scores;
            out.write_record([
                p.image_id.clone(),
                fmt(s.iou),
                fmt(s.dice),
                fmt_opt(s.precision),
                fmt(s.recall),
                fmt_opt(s.specificity),
                fmt(s.hausdorff_px),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// One row per metric: name, corpus mean, number of images averaged.
    pub fn write_summary_csv<W: Write>(&self, mut w: W, notes: &[(String, String)]) -> std::io::Result<()> {
        for (k, v) in notes {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "# hausdorff_excluded={}", self.hausdorff_excluded.len())?;
        writeln!(w, "# empty_truth={}", self.empty_truth.len())?;
        let m = &self.means;
        let n = self.images;
        let rows = [
            ("mean_iou", Some(m.mean_iou), n),
            ("dice", Some(m.dice), n),
            ("precision", m.precision, n - self.precision_undefined),
            ("recall", Some(m.recall), n),
            ("hausdorff_px", m.hausdorff_px, n - self.hausdorff_excluded.len()),
            ("specificity", m.specificity, n - self.specificity_undefined),
        ];
        writeln!(w, "metric,value,images")?;
        for (name, value, count) in rows {
            writeln!(w, "{name},{},{count}", fmt_opt(value))?;
        }
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Scores every id in `ids` against its prediction `<pred_dir>/<id>.png`.
/// All ids must have a prediction and a ground-truth mask.
pub fn evaluate_segmentation(pred_dir: &Path, truth_dir: &Path, ids: &[String]) -> Result<SegEvalReport, MetricsError> {
    let missing_pred: Vec<String> = ids
        .iter()
        .filter(|id| !pred_dir.join(format!("{id}.png")).is_file())
        .cloned()
        .collect();
    if !missing_pred.is_empty() {
        return Err(MetricsError::MissingPrediction(missing_pred));
    }
    let missing_truth: Vec<String> = ids
        .iter()
        .filter(|id| find_truth_mask(truth_dir, id).is_none())
        .cloned()
        .collect();
    if !missing_truth.is_empty() {
        return Err(MetricsError::MissingTruth(missing_truth));
    }

    let results: Vec<Result<(String, Option<SegmentationScores>), MetricsError>> = ids
        .par_iter()
        .map(|id| {
            let pred = BinaryMask::load_png(&pred_dir.join(format!("{id}.png")))?;
            let truth = BinaryMask::load_png(&find_truth_mask(truth_dir, id).expect("checked above"))?;
            match seg_scores(&pred, &truth) {
                Ok(s) => Ok((id.clone(), Some(s))),
                Err(MetricsError::EmptyTruth) => Ok((id.clone(), None)),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut per_image = Vec::new();
    let mut empty_truth = Vec::new();
    for r in results {
        match r? {
            (id, Some(scores)) => per_image.push(SegImageScore { image_id: id, scores }),
            (id, None) => empty_truth.push(id),
        }
    }
    empty_truth.sort();
    Ok(SegEvalReport::from_scores(per_image, empty_truth))
}

/// One row of a classification prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: String,
    pub score: f64,
    pub label: u8,
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, MetricsError> {
    let csv_err = |source| MetricsError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in reader.deserialize::<Prediction>() {
        let p = row.map_err(csv_err)?;
        let invalid = |detail: &str| MetricsError::InvalidPrediction {
            id: p.image_id.clone(),
            detail: detail.to_string(),
        };
        if !(0.0..=1.0).contains(&p.score) {
            return Err(invalid("score outside [0, 1]"));
        }
        if p.label > 1 {
            return Err(invalid("label must be 0 or 1"));
        }
        if !seen.insert(p.image_id.clone()) {
            return Err(invalid("duplicate image id"));
        }
        out.push(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClsEvalReport {
    pub scores: ClassificationScores,
    /// Predictions present in the file but not requested.
    pub extra_predictions: usize,
}

impl ClsEvalReport {
    pub fn write_summary_csv<W: Write>(&self, mut w: W, notes: &[(String, String)]) -> std::io::Result<()> {
        for (k, v) in notes {
            writeln!(w, "# {k}={v}")?;
        }
        let s = &self.scores;
        writeln!(w, "# extra_predictions={}", self.extra_predictions)?;
        writeln!(w, "metric,value")?;
        let rows = [
            ("accuracy", Some(s.accuracy)),
            ("auc", s.auc),
            ("precision", s.precision),
            ("recall", s.recall),
            ("f1", s.f1),
            ("loss", Some(s.loss)),
        ];
        for (name, v) in rows {
            writeln!(w, "{name},{}", fmt_opt(v))?;
        }
        let c = &s.confusion;
        for (name, v) in [("tp", c.tp), ("fp", c.fp), ("tn", c.tn), ("fn", c.fn_)] {
            writeln!(w, "{name},{v}")?;
        }
        Ok(())
    }
}

/// Scores predictions, restricted to `expected` ids when given; every
/// expected id must be present.
pub fn evaluate_classification(
    predictions: &[Prediction],
    expected: Option<&[String]>,
) -> Result<ClsEvalReport, MetricsError> {
    let (selected, extra): (Vec<&Prediction>, usize) = match expected {
        None => (predictions.iter().collect(), 0),
        Some(ids) => {
            let want: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
            let have: HashSet<&str> = predictions.iter().map(|p| p.image_id.as_str()).collect();
            let missing: Vec<String> = want
                .iter()
                .filter(|id| !have.contains(*id))
                .map(|s| s.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(MetricsError::MissingPrediction(missing));
            }
            let sel: Vec<&Prediction> = predictions
                .iter()
                .filter(|p| want.contains(p.image_id.as_str()))
                .collect();
            let extra = predictions.len() - sel.len();
            (sel, extra)
        }
    };
    let samples: Vec<(f64, bool)> = selected.iter().map(|p| (p.score, p.label == 1)).collect();
    Ok(ClsEvalReport {
        scores: cls_scores(&samples)?,
        extra_predictions: extra,
    })
}
