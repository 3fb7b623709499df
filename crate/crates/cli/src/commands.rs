use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use dermfair_core::dataset::{
    self, ingest_isic, integrate_synthetic, scan_synthetic_dir, DatasetError, IngestOptions, Manifest,
    Source, Split, SplitSpec, StratKey,
};
use dermfair_core::graphcut::{segment_maxflow, GraphCutError, GraphCutParams};
use dermfair_core::image_io::{self, ImageIoError};
use dermfair_core::metrics::{self, MetricsError};
use dermfair_core::preprocess::{self, PreprocessConfig, PreprocessError};
use dermfair_core::skintone::{self, analyze_image};
use dermfair_core::synthval::{
    self, validate_synthetic, ReferenceStats, SynthThresholds, SynthValError, SynthValidationReport,
};
use dermfair_core::training_log::{Panel, TrainingLog, TrainingLogError};
use dermfair_core::{fixtures, BinaryMask};

use crate::{
    AuditArgs, EvalClsArgs, EvalSegArgs, FixturesArgs, IngestArgs, IntegrateArgs, PreprocessArgs, ReportArgs,
    SegmentArgs, SplitArgs, ValidateSynthArgs,
};

/// Prints a JSON error summary on stderr and returns exit status 1.
pub fn report_error(err: &anyhow::Error) -> ExitCode {
    let summary = json!({
        "error": {
            "kind": error_kind(err),
            "message": err.to_string(),
            "causes": err.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
        }
    });
    eprintln!("{summary}");
    ExitCode::from(1)
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<DatasetError>() {
            return "dataset";
        }
        if cause.is::<MetricsError>() {
            return "metrics";
        }
        if cause.is::<SynthValError>() {
            return "synthval";
        }
        if cause.is::<PreprocessError>() {
            return "preprocess";
        }
        if cause.is::<GraphCutError>() {
            return "graphcut";
        }
        if cause.is::<TrainingLogError>() {
            return "training_log";
        }
        if cause.is::<ImageIoError>() {
            return "image_io";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Prints a JSON summary on stdout. A closed pipe is not an error: the
/// artifacts are already on disk.
fn print_json(value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn parse_split(s: Option<&str>) -> Result<Option<Split>> {
    s.map(|v| v.parse::<Split>().map_err(anyhow::Error::msg)).transpose()
}

fn notes(pairs: &[(&str, String)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn config_map(notes: &[(String, String)]) -> serde_json::Map<String, serde_json::Value> {
    notes
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
        .collect()
}

fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    let report = ingest_isic(
        &a.metadata,
        &a.images,
        IngestOptions {
            require_images: !a.allow_missing,
        },
    )?;
    let header = notes(&[
        ("rows_read", report.rows_read.to_string()),
        ("unknown_diagnoses", report.unknown_diagnoses.len().to_string()),
        ("missing_files", report.missing_files.len().to_string()),
        ("missing_patient_ids", report.missing_patient_ids.to_string()),
    ]);
    report.manifest.save(&a.out, &header)?;
    print_json(&report)
}

pub fn audit(a: AuditArgs) -> Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    let audit = skintone::audit_dataset(&manifest);
    create_dir(&a.out)?;

    let mut w = create_file(&a.out.join("audit.csv"))?;
    audit.write_csv(&mut w)?;
    w.flush()?;
    write_json(&a.out.join("audit.json"), &audit.to_json())?;
    let mut w = create_file(&a.out.join("audit_images.csv"))?;
    audit.write_entries_csv(&mut w)?;
    w.flush()?;

    let annotated = skintone::annotate_manifest(&manifest, &audit);
    annotated.save(&a.out.join("manifest.csv"), &audit.header_notes())?;
    print_json(&json!({
        "images": audit.total(),
        "dark_count": audit.dark_count(),
        "dark_share": audit.dark_share(),
    }))
}

#[derive(Serialize)]
struct Exclusion {
    image_id: String,
    reason: String,
}

pub fn preprocess(a: PreprocessArgs) -> Result<()> {
    let mut cfg: PreprocessConfig = match &a.config {
        Some(p) => load_toml(p)?,
        None => PreprocessConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let split = parse_split(a.split.as_deref())?;
    let manifest = Manifest::load(&a.manifest)?;
    let records: Vec<_> = manifest
        .records()
        .iter()
        .filter(|r| split.map_or(true, |s| r.split == Some(s)))
        .collect();
    create_dir(&a.out)?;
    let aug_dir = a.out.join("augmented");
    if a.augment_copies > 0 {
        create_dir(&aug_dir)?;
    }

    let outcomes: Vec<Result<usize, Exclusion>> = records
        .par_iter()
        .map(|r| {
            let exclude = |reason: String| Exclusion {
                image_id: r.image_id.clone(),
                reason,
            };
            let img = image_io::load_rgb(&r.path).map_err(|e| exclude(format!("unreadable: {e}")))?;
            let out = preprocess::preprocess_rgb(&img, &cfg).map_err(|e| exclude(e.to_string()))?;
            image_io::save_rgb(&out, &a.out.join(format!("{}.png", r.image_id)))
                .map_err(|e| exclude(format!("write failed: {e}")))?;
            let mut copies = 0;
            if a.augment_copies > 0 && matches!(r.split, None | Some(Split::Train)) {
                for k in 0..a.augment_copies {
                    let aug = preprocess::augmented_copy(&img, &cfg, &r.image_id, k)
                        .map_err(|e| exclude(e.to_string()))?;
                    image_io::save_rgb(&aug, &aug_dir.join(format!("{}_aug{k}.png", r.image_id)))
                        .map_err(|e| exclude(format!("write failed: {e}")))?;
                    copies += 1;
                }
            }
            Ok(copies)
        })
        .collect();

    let mut excluded = Vec::new();
    let mut processed = 0;
    let mut augmented = 0;
    for o in outcomes {
        match o {
            Ok(c) => {
                processed += 1;
                augmented += c;
            }
            Err(e) => excluded.push(e),
        }
    }
    let cfg_notes = preprocess_notes(&cfg);
    let mut w = create_file(&a.out.join("excluded.csv"))?;
    for (k, v) in &cfg_notes {
        writeln!(w, "# {k}={v}")?;
    }
    let mut csv = csv::Writer::from_writer(&mut w);
    csv.write_record(["image_id", "reason"])?;
    for e in &excluded {
        csv.write_record([&e.image_id, &e.reason])?;
    }
    csv.flush()?;
    drop(csv);
    w.flush()?;
    write_json(&a.out.join("preprocess_config.json"), &cfg)?;
    print_json(&json!({
        "config": config_map(&cfg_notes),
        "processed": processed,
        "excluded": excluded.len(),
        "augmented": augmented,
    }))
}

fn preprocess_notes(cfg: &PreprocessConfig) -> Vec<(String, String)> {
    let v = serde_json::to_value(cfg).expect("config serializes");
    v.as_object()
        .expect("struct serializes to a map")
        .iter()
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            (k.clone(), s)
        })
        .collect()
}

pub fn validate_synth(a: ValidateSynthArgs) -> Result<()> {
    let mut thresholds: SynthThresholds = match &a.thresholds {
        Some(p) => load_toml(p)?,
        None => SynthThresholds::default(),
    };
    if let Some(seed) = a.seed {
        thresholds.seed = seed;
    }
    thresholds.validate()?;
    let manifest = Manifest::load(&a.real_manifest)?;
    let real: Vec<_> = manifest.records().iter().filter(|r| r.source == Source::Real).collect();

    // Records without a stored tone class are classified on the fly.
    let loaded: Vec<Option<dermfair_core::RgbImage>> = real
        .par_iter()
        .map(|r| {
            let img = image_io::load_rgb(&r.path).ok()?;
            let keep = a.all_real
                || r.fitzpatrick
                    .unwrap_or_else(|| analyze_image(&img).fitzpatrick)
                    .is_dark();
            keep.then_some(img)
        })
        .collect();
    let reference: Vec<_> = loaded.into_iter().flatten().collect();
    let stats = ReferenceStats::build(&reference, &thresholds)?;
    drop(reference);

    let candidates = scan_synthetic_dir(&a.synth_dir)?;
    let reports: Vec<SynthValidationReport> = candidates
        .par_iter()
        .map(|c| match image_io::load_rgb(&c.path) {
            Ok(img) => validate_synthetic(&c.image_id, &img, &stats),
            Err(e) => SynthValidationReport::unreadable(&c.image_id, &e.to_string()),
        })
        .collect();

    let selection = if a.all_real { "all_real" } else { "dark_V_VI" };
    let extra = notes(&[("reference_selection", selection.to_string())]);
    let mut w = create_file(&a.out)?;
    synthval::write_report(&mut w, &reports, &stats, &extra)?;
    w.flush()?;
    let counts = synthval::verdict_counts(&reports);
    print_json(&json!({
        "reference_images": stats.count,
        "reference_selection": selection,
        "candidates": counts.candidates,
        "accepted": counts.accepted,
        "rejected": counts.rejected,
    }))
}

pub fn integrate(a: IntegrateArgs) -> Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    let synthetic = scan_synthetic_dir(&a.synth_dir)?;
    let file = fs::File::open(&a.report).with_context(|| format!("opening {}", a.report.display()))?;
    let rows = synthval::read_report(BufReader::new(file))?;
    let verdicts: HashMap<String, synthval::Verdict> = rows.into_iter().map(|r| (r.image_id, r.verdict)).collect();
    let (merged, summary) = integrate_synthetic(&manifest, &synthetic, &verdicts)?;
    let header = notes(&[
        ("real", summary.real.to_string()),
        ("synthetic_candidates", summary.synthetic_candidates.to_string()),
        ("synthetic_accepted", summary.accepted.to_string()),
        ("synthetic_rejected", summary.rejected.to_string()),
        ("total", summary.total.to_string()),
    ]);
    merged.save(&a.out, &header)?;
    print_json(&summary)
}

pub fn split(a: SplitArgs) -> Result<()> {
    let fractions: Vec<f64> = a
        .fractions
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .context("parsing --fractions")?;
    if fractions.len() != 3 {
        bail!("--fractions needs three comma-separated values");
    }
    let strat_keys: Vec<StratKey> = a
        .strat_keys
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<StratKey>().map_err(anyhow::Error::msg))
        .collect::<Result<_>>()?;
    let spec = SplitSpec {
        fractions: [fractions[0], fractions[1], fractions[2]],
        strat_keys,
        seed: a.seed,
        synthetic_train_only: a.synthetic_train_only,
    };
    let manifest = Manifest::load(&a.manifest)?;
    let (out, summary) = dataset::split(&manifest, &spec)?;
    let header = notes(&[
        ("seed", spec.seed.to_string()),
        ("fractions", a.fractions.clone()),
        (
            "strat_keys",
            spec.strat_keys.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
        ),
        ("synthetic_train_only", spec.synthetic_train_only.to_string()),
        ("train_images", summary.images[0].to_string()),
        ("val_images", summary.images[1].to_string()),
        ("test_images", summary.images[2].to_string()),
    ]);
    out.save(&a.out, &header)?;
    print_json(&summary)
}

pub fn segment(a: SegmentArgs) -> Result<()> {
    let params = GraphCutParams {
        lambda: a.lambda,
        sigma: a.sigma,
        invert: a.invert,
    };
    params.validate()?;
    let split = parse_split(a.split.as_deref())?;
    let manifest = Manifest::load(&a.manifest)?;
    let records: Vec<_> = manifest
        .records()
        .iter()
        .filter(|r| split.map_or(true, |s| r.split == Some(s)))
        .filter(|r| a.include_synthetic || r.source == Source::Real)
        .collect();
    create_dir(&a.out)?;

    let started = Instant::now();
    let rows: Vec<Result<(String, &'static str, usize)>> = records
        .par_iter()
        .map(|r| {
            let img = image_io::load_rgb(&r.path)?;
            let (mask, status) = match segment_maxflow(&img, &params) {
                Ok(m) => (m, "ok"),
                // A single-level image has no lesion to find; write an empty
                // mask so downstream scoring still sees a prediction.
                Err(GraphCutError::DegenerateImage) => (BinaryMask::new(img.width(), img.height()), "degenerate"),
                Err(e) => return Err(e.into()),
            };
            mask.save_png(&a.out.join(format!("{}.png", r.image_id)))?;
            Ok((r.image_id.clone(), status, mask.count()))
        })
        .collect();
    let elapsed = started.elapsed();

    let mut w = create_file(&a.out.join("segment_log.csv"))?;
    for (k, v) in [("lambda", a.lambda.to_string()), ("sigma", a.sigma.to_string()), ("invert", a.invert.to_string())] {
        writeln!(w, "# {k}={v}")?;
    }
    writeln!(w, "image_id,status,lesion_pixels")?;
    let mut degenerate = 0;
    for row in rows {
        let (id, status, count) = row?;
        if status != "ok" {
            degenerate += 1;
        }
        writeln!(w, "{id},{status},{count}")?;
    }
    w.flush()?;
    let n = records.len();
    print_json(&json!({
        "images": n,
        "degenerate": degenerate,
        "mean_ms_per_image": if n > 0 { elapsed.as_secs_f64() * 1000.0 / n as f64 } else { 0.0 },
    }))
}

fn selected_ids(
    manifest: Option<&Path>,
    split: Option<Split>,
    include_synthetic: bool,
) -> Result<Option<Vec<String>>> {
    let Some(path) = manifest else {
        return Ok(None);
    };
    let m = Manifest::load(path)?;
    let mut ids: Vec<String> = m
        .records()
        .iter()
        .filter(|r| split.map_or(true, |s| r.split == Some(s)))
        .filter(|r| include_synthetic || r.source == Source::Real)
        .map(|r| r.image_id.clone())
        .collect();
    ids.sort();
    Ok(Some(ids))
}

pub fn eval_seg(a: EvalSegArgs) -> Result<()> {
    let split = parse_split(a.split.as_deref())?;
    let ids = match selected_ids(a.manifest.as_deref(), split, a.include_synthetic)? {
        Some(ids) => ids,
        None => {
            let mut ids: Vec<String> = fs::read_dir(&a.pred)
                .with_context(|| format!("reading {}", a.pred.display()))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "png"))
                .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
                .collect();
            ids.sort();
            ids
        }
    };
    let report = metrics::evaluate_segmentation(&a.pred, &a.truth, &ids)?;
    create_dir(&a.out)?;
    let header = notes(&[
        ("split", a.split.clone().unwrap_or_else(|| "all".into())),
        ("include_synthetic", a.include_synthetic.to_string()),
        ("hausdorff", "exact, boundary pixels, euclidean".into()),
        ("undefined_policy", "excluded from mean with count".into()),
    ]);
    let mut w = create_file(&a.out.join("seg_per_image.csv"))?;
    report.write_per_image_csv(&mut w)?;
    w.flush()?;
    let mut w = create_file(&a.out.join("seg_summary.csv"))?;
    report.write_summary_csv(&mut w, &header)?;
    w.flush()?;
    write_json(
        &a.out.join("seg_report.json"),
        &json!({ "config": config_map(&header), "report": report_json(&report)? }),
    )?;
    print_json(&json!({
        "images": report.images,
        "means": report.means,
        "hausdorff_excluded": report.hausdorff_excluded.len(),
        "empty_truth": report.empty_truth.len(),
    }))
}

/// Serializes a segmentation report with infinite distances as strings,
/// since JSON has no infinity.
fn report_json(report: &metrics::SegEvalReport) -> Result<serde_json::Value> {
    let per_image: Vec<_> = report
        .per_image
        .iter()
        .map(|p| {
            let s = &p.scores;
            json!({
                "image_id": p.image_id,
                "iou": s.iou,
                "dice": s.dice,
                "precision": s.precision,
                "recall": s.recall,
                "specificity": s.specificity,
                "hausdorff_px": if s.hausdorff_px.is_finite() { json!(s.hausdorff_px) } else { json!("inf") },
                "confusion": s.confusion,
            })
        })
        .collect();
    Ok(json!({
        "images": report.images,
        "means": report.means,
        "precision_undefined": report.precision_undefined,
        "specificity_undefined": report.specificity_undefined,
        "hausdorff_excluded": report.hausdorff_excluded,
        "empty_truth": report.empty_truth,
        "per_image": per_image,
    }))
}

pub fn eval_cls(a: EvalClsArgs) -> Result<()> {
    let split = parse_split(a.split.as_deref())?;
    let predictions = metrics::read_predictions(&a.predictions)?;
    let ids = selected_ids(a.manifest.as_deref(), split, !a.real_only)?;
    let report = metrics::evaluate_classification(&predictions, ids.as_deref())?;
    create_dir(&a.out)?;
    let header = notes(&[
        ("split", a.split.clone().unwrap_or_else(|| "all".into())),
        ("real_only", a.real_only.to_string()),
        ("decision_threshold", metrics::DECISION_THRESHOLD.to_string()),
        ("auc", "trapezoidal, ties half credit".into()),
    ]);
    let mut w = create_file(&a.out.join("cls_summary.csv"))?;
    report.write_summary_csv(&mut w, &header)?;
    w.flush()?;
    write_json(
        &a.out.join("cls_report.json"),
        &json!({ "config": config_map(&header), "report": report }),
    )?;
    print_json(&report.scores)
}

pub fn report(a: ReportArgs) -> Result<()> {
    let file = fs::File::open(&a.log).with_context(|| format!("opening {}", a.log.display()))?;
    let log = TrainingLog::read_csv(BufReader::new(file))?;
    create_dir(&a.out)?;
    let mut w = create_file(&a.out.join("training_series.csv"))?;
    log.write_tidy_csv(&mut w)?;
    w.flush()?;
    for panel in Panel::ALL {
        let path = a.out.join(format!("{}.svg", panel.as_str()));
        fs::write(&path, log.svg(panel)).with_context(|| format!("writing {}", path.display()))?;
    }
    let best = log.best_auc_epoch();
    let summary = json!({
        "epochs": log.records().len(),
        "best_auc_epoch": best.epoch,
        "best_auc": best.auc_val,
        "best_epoch_record": best,
    });
    write_json(&a.out.join("training_summary.json"), &summary)?;
    print_json(&summary)
}

pub fn fixtures(a: FixturesArgs) -> Result<()> {
    let corpus = fixtures::generate_corpus(&a.out, a.seed)?;
    print_json(&json!({
        "root": corpus.root,
        "metadata": corpus.metadata,
        "images": corpus.images,
        "masks": corpus.masks,
        "synthetic": corpus.synthetic,
        "predictions": corpus.predictions,
        "training_log": corpus.training_log,
        "real_images": fixtures::REAL_IMAGES,
        "synthetic_images": fixtures::SYNTHETIC_IMAGES,
    }))
}
