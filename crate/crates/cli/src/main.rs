//! `dermfair`: command-line driver for the skin-tone audit and evaluation
//! pipeline.
//!
//! Exit status is 0 on success, 1 on a data error (with a JSON error summary
//! on stderr) and 2 on a usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dermfair", version, about = "Skin-tone audit, synthetic validation and evaluation toolkit")]
struct Cli {
    /// Worker threads (defaults to available parallelism).
    #[arg(long, global = true, env = "DERMFAIR_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a manifest from ISIC-style metadata and an image directory.
    Ingest(IngestArgs),
    /// Classify skin tone per image and tabulate tone × superclass.
    Audit(AuditArgs),
    /// Run the preprocessing chain and write processed PNGs.
    Preprocess(PreprocessArgs),
    /// Validate synthetic images against real dark-skin references.
    ValidateSynth(ValidateSynthArgs),
    /// Append accepted synthetic images to a manifest.
    Integrate(IntegrateArgs),
    /// Assign patient-level stratified train/val/test splits.
    Split(SplitArgs),
    /// Segment lesions with the max-flow baseline.
    Segment(SegmentArgs),
    /// Score predicted masks against ground truth.
    EvalSeg(EvalSegArgs),
    /// Score a classification prediction file.
    EvalCls(EvalClsArgs),
    /// Turn a training log into tidy series and SVG charts.
    Report(ReportArgs),
    /// Write the bundled synthetic test corpus.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long, env = "DERMFAIR_METADATA")]
    metadata: PathBuf,
    #[arg(long, env = "DERMFAIR_IMAGES")]
    images: PathBuf,
    /// Output manifest CSV (a JSON twin is written next to it).
    #[arg(long)]
    out: PathBuf,
    /// Keep rows whose image file is absent.
    #[arg(long)]
    allow_missing: bool,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for audit tables and the annotated manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML file overriding preprocessing parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Only process records of this split.
    #[arg(long)]
    split: Option<String>,
    /// Augmented copies per training image.
    #[arg(long, default_value_t = 0)]
    augment_copies: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ValidateSynthArgs {
    #[arg(long)]
    real_manifest: PathBuf,
    #[arg(long)]
    synth_dir: PathBuf,
    /// Report CSV path.
    #[arg(long)]
    out: PathBuf,
    /// TOML file overriding validation thresholds.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Use every real image as reference instead of types V and VI only.
    #[arg(long)]
    all_real: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct IntegrateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    synth_dir: PathBuf,
    /// Validation report written by `validate-synth`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "0.7,0.15,0.15")]
    fractions: String,
    /// Comma-separated stratification keys: superclass, fitzpatrick, source.
    #[arg(long, default_value = "superclass,fitzpatrick")]
    strat_keys: String,
    /// Put every synthetic record in the training split.
    #[arg(long)]
    synthetic_train_only: bool,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50.0)]
    lambda: f64,
    #[arg(long, default_value_t = 10.0)]
    sigma: f64,
    /// Segment the brighter class (hypopigmented lesions).
    #[arg(long)]
    invert: bool,
    #[arg(long)]
    split: Option<String>,
    /// Also segment synthetic records.
    #[arg(long)]
    include_synthetic: bool,
}

#[derive(Debug, Args)]
struct EvalSegArgs {
    /// Directory of predicted `<id>.png` masks.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth masks (`<id>.png` or `<id>_segmentation.png`).
    #[arg(long)]
    truth: PathBuf,
    /// Restrict scoring to this manifest's records.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    include_synthetic: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalClsArgs {
    /// CSV with columns image_id,score,label.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    real_only: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// CSV with columns epoch,loss_train,loss_val,acc_train,acc_val,auc_val.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FixturesArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return commands::report_error(&anyhow::Error::new(e));
        }
    }
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Audit(a) => commands::audit(a),
        Command::Preprocess(a) => commands::preprocess(a),
        Command::ValidateSynth(a) => commands::validate_synth(a),
        Command::Integrate(a) => commands::integrate(a),
        Command::Split(a) => commands::split(a),
        Command::Segment(a) => commands::segment(a),
        Command::EvalSeg(a) => commands::eval_seg(a),
        Command::EvalCls(a) => commands::eval_cls(a),
        Command::Report(a) => commands::report(a),
        Command::Fixtures(a) => commands::fixtures(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => commands::report_error(&e),
    }
}
