//! Individual Typology Angle, Fitzpatrick mapping and dataset tone audits.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::{self, LabPixel};
use crate::dataset::{ImageRecord, Manifest, Superclass};
use crate::image_io;

/// Images with fewer skin pixels than this are reported as uncertain.
pub const MIN_SKIN_PIXELS: usize = 500;

/// Band convention recorded in every audit header.
pub const BAND_CONVENTION: &str =
    "I: ITA>55; II: 40<ITA<=55; III: 27<ITA<=40; IV: 10<ITA<=27; V: -30<=ITA<=10; VI: ITA<-30";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Fitzpatrick {
    I,
    II,
    III,
    IV,
    V,
    VI,
    Uncertain,
}

impl Fitzpatrick {
    pub const ALL: [Fitzpatrick; 7] = [
        Fitzpatrick::I,
        Fitzpatrick::II,
        Fitzpatrick::III,
        Fitzpatrick::IV,
        Fitzpatrick::V,
        Fitzpatrick::VI,
        Fitzpatrick::Uncertain,
    ];

    /// The band containing a finite ITA value.
    pub fn from_ita(ita: f64) -> Self {
        if ita > 55.0 {
            Fitzpatrick::I
        } else if ita > 40.0 {
            Fitzpatrick::II
        } else if ita > 27.0 {
            Fitzpatrick::III
        } else if ita > 10.0 {
            Fitzpatrick::IV
        } else if ita >= -30.0 {
            Fitzpatrick::V
        } else {
            Fitzpatrick::VI
        }
    }

    pub fn is_dark(self) -> bool {
        matches!(self, Fitzpatrick::V | Fitzpatrick::VI)
    }

    /// 0 for type I through 5 for type VI; `None` when uncertain.
    pub fn darkness(self) -> Option<u8> {
        match self {
            Fitzpatrick::Uncertain => None,
            other => Some(other as u8),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Fitzpatrick::I => "I",
            Fitzpatrick::II => "II",
            Fitzpatrick::III => "III",
            Fitzpatrick::IV => "IV",
            Fitzpatrick::V => "V",
            Fitzpatrick::VI => "VI",
            Fitzpatrick::Uncertain => "Uncertain",
        }
    }
}

impl fmt::Display for Fitzpatrick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fitzpatrick {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Fitzpatrick::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown Fitzpatrick type {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ItaError {
    #[error("ITA undefined: b* = 0 and L* = 50")]
    DegenerateChroma,
}

/// `(180/π)·arctan((L* − 50)/b*)` using the principal value of the
/// single-argument arctangent. With `b* = 0` the ±90° limit is returned.
pub fn compute_ita(lab: LabPixel) -> Result<f64, ItaError> {
    let num = lab.l - 50.0;
    if lab.b == 0.0 {
        return if num == 0.0 {
            Err(ItaError::DegenerateChroma)
        } else {
            Ok(90.0f64.copysign(num))
        };
    }
    Ok((num / lab.b).atan().to_degrees())
}

pub fn ita_to_fitzpatrick(ita_degrees: f64, skin_pixel_count: usize) -> Fitzpatrick {
    if skin_pixel_count < MIN_SKIN_PIXELS || !ita_degrees.is_finite() {
        Fitzpatrick::Uncertain
    } else {
        Fitzpatrick::from_ita(ita_degrees)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkinToneResult {
    /// `None` when the image is uncertain.
    pub ita_degrees: Option<f64>,
    pub fitzpatrick: Fitzpatrick,
    pub skin_pixel_count: usize,
    pub mean_lab: Option<LabPixel>,
    /// Mean b* below zero; the principal-value ITA is of ambiguous meaning.
    pub blue_shifted: bool,
}

/// Skin mask → masked mean Lab → ITA → Fitzpatrick type.
pub fn analyze_image(image: &RgbImage) -> SkinToneResult {
    let mask = colorspace::skin_mask(image);
    let count = mask.count();
    let uncertain = SkinToneResult {
        ita_degrees: None,
        fitzpatrick: Fitzpatrick::Uncertain,
        skin_pixel_count: count,
        mean_lab: None,
        blue_shifted: false,
    };
    if count < MIN_SKIN_PIXELS {
        return uncertain;
    }
    let Ok(lab) = colorspace::mean_lab(image, &mask) else {
        return uncertain;
    };
    match compute_ita(lab) {
        Ok(ita) => SkinToneResult {
            ita_degrees: Some(ita),
            fitzpatrick: ita_to_fitzpatrick(ita, count),
            skin_pixel_count: count,
            mean_lab: Some(lab),
            blue_shifted: lab.b < 0.0,
        },
        Err(_) => SkinToneResult {
            mean_lab: Some(lab),
            ..uncertain
        },
    }
}

/// A Table-1 style row: a Fitzpatrick class or the unreadable bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum AuditRow {
    Type(Fitzpatrick),
    Unreadable,
}

impl AuditRow {
    pub const ALL: [AuditRow; 8] = [
        AuditRow::Type(Fitzpatrick::I),
        AuditRow::Type(Fitzpatrick::II),
        AuditRow::Type(Fitzpatrick::III),
        AuditRow::Type(Fitzpatrick::IV),
        AuditRow::Type(Fitzpatrick::V),
        AuditRow::Type(Fitzpatrick::VI),
        AuditRow::Type(Fitzpatrick::Uncertain),
        AuditRow::Unreadable,
    ];

    fn index(self) -> usize {
        match self {
            AuditRow::Type(f) => f as usize,
            AuditRow::Unreadable => 7,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AuditRow::Type(f) => f.as_str(),
            AuditRow::Unreadable => "Unreadable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditEntry {
    pub image_id: String,
    pub superclass: Superclass,
    pub row: AuditRow,
    pub ita_degrees: Option<f64>,
    pub skin_pixel_count: usize,
    pub blue_shifted: bool,
    pub error: Option<String>,
}

impl AuditEntry {
    pub fn fitzpatrick(&self) -> Option<Fitzpatrick> {
        match self.row {
            AuditRow::Type(f) => Some(f),
            AuditRow::Unreadable => None,
        }
    }
}

/// Cross-tabulation of tone row × lesion superclass.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ToneAudit {
    counts: [[usize; 2]; 8],
    pub entries: Vec<AuditEntry>,
}

impl ToneAudit {
    pub fn from_entries(entries: Vec<AuditEntry>) -> Self {
        let mut audit = ToneAudit::default();
        for e in entries {
            audit.add(e);
        }
        audit
    }

    pub fn add(&mut self, entry: AuditEntry) {
        self.counts[entry.row.index()][superclass_index(entry.superclass)] += 1;
        self.entries.push(entry);
    }

    /// Associative merge; entries are concatenated in argument order.
    pub fn merge(mut self, other: ToneAudit) -> ToneAudit {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            a[0] += b[0];
            a[1] += b[1];
        }
        self.entries.extend(other.entries);
        self
    }

    pub fn count(&self, row: AuditRow, superclass: Superclass) -> usize {
        self.counts[row.index()][superclass_index(superclass)]
    }

    pub fn row_total(&self, row: AuditRow) -> usize {
        self.counts[row.index()].iter().sum()
    }

    pub fn column_total(&self, superclass: Superclass) -> usize {
        self.counts.iter().map(|r| r[superclass_index(superclass)]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Images classified V or VI.
    pub fn dark_count(&self) -> usize {
        self.row_total(AuditRow::Type(Fitzpatrick::V)) + self.row_total(AuditRow::Type(Fitzpatrick::VI))
    }

    /// Dark share of all audited images; 0 for an empty audit.
    pub fn dark_share(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.dark_count() as f64 / n as f64,
        }
    }

    pub fn blue_shifted_count(&self) -> usize {
        self.entries.iter().filter(|e| e.blue_shifted).count()
    }

    pub fn header_notes(&self) -> Vec<(String, String)> {
        vec![
            ("ycbcr".into(), "BT.601 full-range, 8-bit rounded".into()),
            ("skin_cb".into(), "77..=173".into()),
            ("skin_cr".into(), "133..=255".into()),
            ("min_skin_pixels".into(), MIN_SKIN_PIXELS.to_string()),
            ("lab".into(), "sRGB D65, mean over skin mask before ITA".into()),
            ("ita".into(), "principal-value arctan((L*-50)/b*)".into()),
            ("bands".into(), BAND_CONVENTION.into()),
            ("blue_shifted_images".into(), self.blue_shifted_count().to_string()),
        ]
    }

    /// Rows are tone classes plus Uncertain/Unreadable; columns are superclasses.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (k, v) in self.header_notes() {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "fst,melanocytic,non_melanocytic,total")?;
        for row in AuditRow::ALL {
            writeln!(
                w,
                "{},{},{},{}",
                row.label(),
                self.count(row, Superclass::Melanocytic),
                self.count(row, Superclass::NonMelanocytic),
                self.row_total(row)
            )?;
        }
        writeln!(
            w,
            "Total,{},{},{}",
            self.column_total(Superclass::Melanocytic),
            self.column_total(Superclass::NonMelanocytic),
            self.total()
        )
    }

    pub fn write_entries_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "image_id",
            "superclass",
            "fitzpatrick",
            "ita_degrees",
            "skin_pixel_count",
            "blue_shifted",
            "error",
        ])?;
        for e in &self.entries {
            wtr.write_record([
                e.image_id.clone(),
                e.superclass.to_string(),
                e.row.label().to_string(),
                e.ita_degrees.map(|v| v.to_string()).unwrap_or_default(),
                e.skin_pixel_count.to_string(),
                e.blue_shifted.to_string(),
                e.error.clone().unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<_> = AuditRow::ALL
            .iter()
            .map(|&row| {
                serde_json::json!({
                    "fst": row.label(),
                    "melanocytic": self.count(row, Superclass::Melanocytic),
                    "non_melanocytic": self.count(row, Superclass::NonMelanocytic),
                    "total": self.row_total(row),
                })
            })
            .collect();
        let config: serde_json::Map<String, serde_json::Value> = self
            .header_notes()
            .into_iter()
            .map(|(k, v)| (k, serde_json::Value::String(v)))
            .collect();
        serde_json::json!({
            "config": config,
            "rows": rows,
            "totals": {
                "melanocytic": self.column_total(Superclass::Melanocytic),
                "non_melanocytic": self.column_total(Superclass::NonMelanocytic),
                "total": self.total(),
            },
            "dark_count": self.dark_count(),
            "dark_share": self.dark_share(),
            "blue_shifted": self.blue_shifted_count(),
            "unreadable": self.entries.iter()
                .filter(|e| e.row == AuditRow::Unreadable)
                .map(|e| serde_json::json!({"image_id": e.image_id, "error": e.error}))
                .collect::<Vec<_>>(),
        })
    }
}

fn superclass_index(s: Superclass) -> usize {
    match s {
        Superclass::Melanocytic => 0,
        Superclass::NonMelanocytic => 1,
    }
}

fn audit_record<E: fmt::Display>(
    record: &ImageRecord,
    load: &(impl Fn(&ImageRecord) -> Result<RgbImage, E> + Sync),
) -> AuditEntry {
    match load(record) {
        Ok(img) => {
            let res = analyze_image(&img);
            AuditEntry {
                image_id: record.image_id.clone(),
                superclass: record.superclass,
                row: AuditRow::Type(res.fitzpatrick),
                ita_degrees: res.ita_degrees,
                skin_pixel_count: res.skin_pixel_count,
                blue_shifted: res.blue_shifted,
                error: None,
            }
        }
        Err(e) => AuditEntry {
            image_id: record.image_id.clone(),
            superclass: record.superclass,
            row: AuditRow::Unreadable,
            ita_degrees: None,
            skin_pixel_count: 0,
            blue_shifted: false,
            error: Some(e.to_string()),
        },
    }
}

/// Audits with a caller-supplied loader. Work is spread across the rayon pool;
/// entries keep manifest order.
pub fn audit_with<E: fmt::Display>(
    manifest: &Manifest,
    load: impl Fn(&ImageRecord) -> Result<RgbImage, E> + Sync,
) -> ToneAudit {
    let entries: Vec<AuditEntry> = manifest
        .records()
        .par_iter()
        .map(|r| audit_record(r, &load))
        .collect();
    ToneAudit::from_entries(entries)
}

/// Audits images loaded from each record's path. Unreadable files land in the
/// `Unreadable` row instead of aborting the run.
pub fn audit_dataset(manifest: &Manifest) -> ToneAudit {
    audit_with(manifest, |r| image_io::load_rgb(&r.path))
}

/// Writes each entry's ITA and Fitzpatrick class back into the manifest.
pub fn annotate_manifest(manifest: &Manifest, audit: &ToneAudit) -> Manifest {
    let mut out = manifest.clone();
    for (r, e) in out.records_mut().iter_mut().zip(&audit.entries) {
        debug_assert_eq!(r.image_id, e.image_id);
        r.ita_degrees = e.ita_degrees;
        r.fitzpatrick = e.fitzpatrick();
    }
    out
}
