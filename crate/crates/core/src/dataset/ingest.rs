use std::path::Path;

use serde::Serialize;

use super::{DatasetError, ImageRecord, Manifest, Source, Superclass};
use crate::image_io;

const ID_COLUMNS: [&str; 4] = ["image_id", "isic_id", "image", "image_name"];
const DIAGNOSIS_COLUMNS: [&str; 6] = [
    "diagnosis",
    "dx",
    "diagnosis_3",
    "diagnosis_2",
    "diagnosis_1",
    "benign_malignant_diagnosis",
];
const PATIENT_COLUMNS: [&str; 2] = ["patient_id", "patient"];
/// ISIC 2019 ground-truth files encode diagnosis as one-hot columns.
const ONE_HOT_COLUMNS: [(&str, &str); 8] = [
    ("MEL", "melanoma"),
    ("NV", "melanocytic nevus"),
    ("BCC", "basal cell carcinoma"),
    ("AK", "actinic keratosis"),
    ("BKL", "benign keratosis"),
    ("DF", "dermatofibroma"),
    ("VASC", "vascular lesion"),
    ("SCC", "squamous cell carcinoma"),
];

const MELANOCYTIC: &[&str] = &[
    "melanoma",
    "mel",
    "melanoma invasive",
    "melanoma in situ",
    "melanoma metastasis",
    "melanocytic nevus",
    "melanocytic naevus",
    "nevus",
    "naevus",
    "nv",
];

const NON_MELANOCYTIC: &[&str] = &[
    "actinic keratosis",
    "akiec",
    "ak",
    "basal cell carcinoma",
    "bcc",
    "benign keratosis",
    "pigmented benign keratosis",
    "bkl",
    "seborrheic keratosis",
    "seborrhoeic keratosis",
    "solar lentigo",
    "lichen planus like keratosis",
    "lplk",
    "dermatofibroma",
    "df",
    "squamous cell carcinoma",
    "scc",
    "vascular lesion",
    "vasc",
];

fn normalize_diagnosis(raw: &str) -> String {
    raw.to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Maps a diagnosis label (full name or HAM10000/ISIC code) to its superclass.
pub fn superclass_of(diagnosis: &str) -> Option<Superclass> {
    let d = normalize_diagnosis(diagnosis);
    if MELANOCYTIC.contains(&d.as_str()) {
        Some(Superclass::Melanocytic)
    } else if NON_MELANOCYTIC.contains(&d.as_str()) {
        Some(Superclass::NonMelanocytic)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    /// Drop records whose image file cannot be found (listed in the report).
    /// When false, such records are kept with a best-guess path.
    pub require_images: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            require_images: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    #[serde(skip)]
    pub manifest: Manifest,
    pub rows_read: usize,
    pub records: usize,
    pub unknown_diagnoses: Vec<(String, String)>,
    pub missing_files: Vec<String>,
    pub missing_patient_ids: usize,
}

fn find_column(headers: &csv::StringRecord, candidates: &[&str]) -> Option<usize> {
    candidates.iter().find_map(|c| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(c))
    })
}

/// Reads ISIC-style metadata into a manifest of real images.
///
/// Rows with unknown diagnoses are listed in the report and skipped. Rows
/// without a patient id become singleton patients keyed by the image id.
pub fn ingest_isic(
    metadata: &Path,
    image_root: &Path,
    options: IngestOptions,
) -> Result<IngestReport, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(metadata)
        .map_err(|e| DatasetError::csv(metadata, e))?;
    let headers = rdr
        .headers()
        .map_err(|e| DatasetError::csv(metadata, e))?
        .clone();
    let id_col = find_column(&headers, &ID_COLUMNS).ok_or(DatasetError::MissingColumn {
        path: metadata.to_path_buf(),
        what: "image id",
    })?;
    let dx_col = find_column(&headers, &DIAGNOSIS_COLUMNS);
    let one_hot: Vec<(usize, &str)> = ONE_HOT_COLUMNS
        .iter()
        .filter_map(|(name, dx)| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .map(|i| (i, *dx))
        })
        .collect();
    if dx_col.is_none() && one_hot.is_empty() {
        return Err(DatasetError::MissingColumn {
            path: metadata.to_path_buf(),
            what: "diagnosis",
        });
    }
    let patient_col = find_column(&headers, &PATIENT_COLUMNS);

    let mut records = Vec::new();
    let mut report = IngestReport {
        manifest: Manifest::default(),
        rows_read: 0,
        records: 0,
        unknown_diagnoses: Vec::new(),
        missing_files: Vec::new(),
        missing_patient_ids: 0,
    };
    for row in rdr.records() {
        let row = row.map_err(|e| DatasetError::csv(metadata, e))?;
        report.rows_read += 1;
        let image_id = row.get(id_col).unwrap_or("").trim().to_string();
        if image_id.is_empty() {
            continue;
        }
        let diagnosis = match dx_col {
            Some(c) => row.get(c).unwrap_or("").trim().to_string(),
            None => one_hot
                .iter()
                .find(|(i, _)| {
                    row.get(*i)
                        .and_then(|v| v.trim().parse::<f64>().ok())
                        .is_some_and(|v| v > 0.5)
                })
                .map(|(_, dx)| dx.to_string())
                .unwrap_or_default(),
        };
        let Some(superclass) = superclass_of(&diagnosis) else {
            report.unknown_diagnoses.push((image_id, diagnosis));
            continue;
        };
        let patient_id = patient_col
            .and_then(|c| row.get(c))
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::to_string)
            .unwrap_or_else(|| {
                report.missing_patient_ids += 1;
                image_id.clone()
            });
        let path = match image_io::find_image(image_root, &image_id) {
            Some(p) => p,
            None => {
                report.missing_files.push(image_id.clone());
                if options.require_images {
                    continue;
                }
                image_root.join(format!("{image_id}.jpg"))
            }
        };
        records.push(ImageRecord {
            image_id,
            path,
            diagnosis,
            superclass,
            patient_id,
            source: Source::Real,
            ita_degrees: None,
            fitzpatrick: None,
            split: None,
        });
    }
    report.records = records.len();
    report.manifest = Manifest::new(records)?;
    Ok(report)
}
