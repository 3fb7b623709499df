use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetError, ImageRecord, Manifest, Source, Superclass, SYNTHETIC_PATIENT_PREFIX};
use crate::image_io;
use crate::skintone::Fitzpatrick;
use crate::synthval::Verdict;

/// Name of the per-directory metadata file written by the generator.
pub const SIDECAR_NAME: &str = "metadata.csv";

/// A generated image described by the generator's sidecar metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImage {
    pub image_id: String,
    pub path: PathBuf,
    pub superclass: Superclass,
    pub diagnosis: Option<String>,
    pub fitzpatrick: Option<Fitzpatrick>,
}

#[derive(Debug, Deserialize)]
struct SidecarRow {
    image_id: String,
    lesion_superclass: String,
    #[serde(default)]
    diagnosis: Option<String>,
    #[serde(default)]
    fitzpatrick: Option<Fitzpatrick>,
}

/// Reads `<dir>/metadata.csv` (columns `image_id,prompt,lesion_superclass,seed`
/// plus optional `diagnosis`, `fitzpatrick`) and resolves each image file.
pub fn scan_synthetic_dir(dir: &Path) -> Result<Vec<SyntheticImage>, DatasetError> {
    let sidecar = dir.join(SIDECAR_NAME);
    if !sidecar.is_file() {
        return Err(DatasetError::MissingSidecar(dir.to_path_buf()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(&sidecar)
        .map_err(|e| DatasetError::csv(&sidecar, e))?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<SidecarRow>() {
        let row = row.map_err(|e| DatasetError::csv(&sidecar, e))?;
        let superclass = row.lesion_superclass.parse::<Superclass>().map_err(|_| {
            DatasetError::UnknownSuperclass {
                image_id: row.image_id.clone(),
                value: row.lesion_superclass.clone(),
            }
        })?;
        let path = image_io::find_image(dir, &row.image_id)
            .ok_or_else(|| DatasetError::MissingSyntheticFile(row.image_id.clone()))?;
        out.push(SyntheticImage {
            image_id: row.image_id,
            path,
            superclass,
            diagnosis: row.diagnosis.filter(|d| !d.is_empty()),
            fitzpatrick: row.fitzpatrick,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IntegrationSummary {
    pub real: usize,
    pub synthetic_candidates: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub accepted_melanocytic: usize,
    pub accepted_non_melanocytic: usize,
    pub total: usize,
}

/// Appends accepted synthetic images to the real manifest.
///
/// Real records are carried over unchanged. Every candidate must have a
/// verdict; rejected candidates are dropped and counted.
pub fn integrate_synthetic(
    real: &Manifest,
    synthetic: &[SyntheticImage],
    verdicts: &HashMap<String, Verdict>,
) -> Result<(Manifest, IntegrationSummary), DatasetError> {
    let unvalidated: Vec<String> = synthetic
        .iter()
        .filter(|s| !verdicts.contains_key(&s.image_id))
        .map(|s| s.image_id.clone())
        .collect();
    if !unvalidated.is_empty() {
        return Err(DatasetError::UnvalidatedImage(unvalidated));
    }
    for r in real.records() {
        if r.source == Source::Real && r.patient_id.starts_with(SYNTHETIC_PATIENT_PREFIX) {
            return Err(DatasetError::ReservedPatientPrefix {
                image_id: r.image_id.clone(),
                patient_id: r.patient_id.clone(),
            });
        }
    }
    let mut ids: HashSet<&str> = real.records().iter().map(|r| r.image_id.as_str()).collect();
    let mut records = real.records().to_vec();
    let mut summary = IntegrationSummary {
        real: real.len(),
        synthetic_candidates: synthetic.len(),
        ..Default::default()
    };
    for s in synthetic {
        if verdicts[&s.image_id] != Verdict::Accept {
            summary.rejected += 1;
            continue;
        }
        if !ids.insert(s.image_id.as_str()) {
            return Err(DatasetError::IdCollision(s.image_id.clone()));
        }
        summary.accepted += 1;
        match s.superclass {
            Superclass::Melanocytic => summary.accepted_melanocytic += 1,
            Superclass::NonMelanocytic => summary.accepted_non_melanocytic += 1,
        }
        records.push(ImageRecord {
            image_id: s.image_id.clone(),
            path: s.path.clone(),
            diagnosis: s
                .diagnosis
                .clone()
                .unwrap_or_else(|| s.superclass.as_str().to_string()),
            superclass: s.superclass,
            patient_id: format!("{SYNTHETIC_PATIENT_PREFIX}{}", s.image_id),
            source: Source::Synthetic,
            ita_degrees: None,
            fitzpatrick: s.fitzpatrick,
            split: None,
        });
    }
    summary.total = records.len();
    Ok((Manifest::new(records)?, summary))
}
