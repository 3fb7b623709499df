//! Training-log ingestion: per-epoch loss/accuracy/AUC curves, tidy series
//! output and static SVG charts.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainingLogError {
    #[error("malformed training log: {0}")]
    MalformedLog(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub loss_train: f64,
    pub loss_val: f64,
    pub acc_train: f64,
    pub acc_val: f64,
    pub auc_val: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Panel {
    Loss,
    Accuracy,
    Auc,
}

impl Panel {
    pub const ALL: [Panel; 3] = [Panel::Loss, Panel::Accuracy, Panel::Auc];

    pub fn as_str(self) -> &'static str {
        match self {
            Panel::Loss => "loss",
            Panel::Accuracy => "accuracy",
            Panel::Auc => "auc",
        }
    }

    fn series(self) -> &'static [(&'static str, fn(&EpochRecord) -> f64)] {
        match self {
            Panel::Loss => &[("train", |r| r.loss_train), ("val", |r| r.loss_val)],
            Panel::Accuracy => &[("train", |r| r.acc_train), ("val", |r| r.acc_val)],
            Panel::Auc => &[("val", |r| r.auc_val)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    records: Vec<EpochRecord>,
}

impl TrainingLog {
    /// Requires at least one row, finite values and strictly increasing epochs.
    pub fn new(records: Vec<EpochRecord>) -> Result<Self, TrainingLogError> {
        if records.is_empty() {
            return Err(TrainingLogError::MalformedLog("no epochs".into()));
        }
        for (i, r) in records.iter().enumerate() {
            let vals = [r.loss_train, r.loss_val, r.acc_train, r.acc_val, r.auc_val];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(TrainingLogError::MalformedLog(format!("non-finite value at epoch {}", r.epoch)));
            }
            if i > 0 && records[i - 1].epoch >= r.epoch {
                return Err(TrainingLogError::MalformedLog(format!(
                    "epoch {} follows epoch {}; epochs must increase",
                    r.epoch,
                    records[i - 1].epoch
                )));
            }
        }
        Ok(Self { records })
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, TrainingLogError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = Vec::new();
        for row in rdr.deserialize() {
            records.push(row.map_err(|e| TrainingLogError::MalformedLog(e.to_string()))?);
        }
        Self::new(records)
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    /// Epoch with the highest validation AUC; the earliest one on ties.
    pub fn best_auc_epoch(&self) -> EpochRecord {
        let mut best = self.records[0];
        for r in &self.records[1..] {
            if r.auc_val > best.auc_val {
                best = *r;
            }
        }
        best
    }

    /// Long-format series: `epoch,panel,series,value`.
    pub fn write_tidy_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "panel", "series", "value"])?;
        for panel in Panel::ALL {
            for (name, get) in panel.series() {
                for r in &self.records {
                    out.write_record([
                        r.epoch.to_string(),
                        panel.as_str().to_string(),
                        name.to_string(),
                        get(r).to_string(),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn svg(&self, panel: Panel) -> String {
        render_svg(&self.records, panel)
    }
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 2] = ["#1f77b4", "#d62728"];

fn render_svg(records: &[EpochRecord], panel: Panel) -> String {
    let series = panel.series();
    let xs: Vec<f64> = records.iter().map(|r| r.epoch as f64).collect();
    let (x_lo, x_hi) = (xs[0], xs[xs.len() - 1]);
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for (_, get) in series {
        for r in records {
            y_lo = y_lo.min(get(r));
            y_hi = y_hi.max(get(r));
        }
    }
    if y_hi - y_lo < 1e-12 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let px = |x: f64| {
        if x_hi > x_lo {
            MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN)
        } else {
            WIDTH / 2.0
        }
    };
    let py = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        panel.as_str()
    );
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for (v, y) in [(y_lo, y0), (y_hi, y1)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.3}</text>"#,
            x0 - 4.0
        );
    }
    for (v, x) in [(x_lo, px(x_lo)), (x_hi, px(x_hi))] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{v}</text>"#,
            y0 + 14.0
        );
    }
    for (k, (name, get)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = records
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.epoch as f64), py(get(r))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        for r in records {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                px(r.epoch as f64),
                py(get(r))
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{name}</text>"#,
            x1 - 40.0,
            y1 + 14.0 * (k as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}
