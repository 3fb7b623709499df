//! Image manifests, ISIC metadata ingestion, synthetic integration and
//! patient-level stratified splitting.

mod ingest;
mod integrate;
mod split;

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::skintone::Fitzpatrick;

pub use ingest::{ingest_isic, superclass_of, IngestOptions, IngestReport};
pub use integrate::{
    integrate_synthetic, scan_synthetic_dir, IntegrationSummary, SyntheticImage, SIDECAR_NAME,
};
pub use split::{split, SplitSpec, SplitSummary, StratKey, ToneGroup};

/// Manifest format version written into every CSV header.
pub const MANIFEST_VERSION: u32 = 1;
/// Prefix reserved for the pseudo-patient ids of synthetic images.
pub const SYNTHETIC_PATIENT_PREFIX: &str = "synth-";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("metadata {path} lacks a column for {what}")]
    MissingColumn { path: PathBuf, what: &'static str },
    #[error("duplicate image id {0}")]
    DuplicateId(String),
    #[error("synthetic image id {0} collides with an existing record")]
    IdCollision(String),
    #[error("real record {image_id} uses the reserved synthetic patient prefix in {patient_id}")]
    ReservedPatientPrefix { image_id: String, patient_id: String },
    #[error("{} synthetic image(s) have no validation verdict: {}", .0.len(), .0.join(", "))]
    UnvalidatedImage(Vec<String>),
    #[error("synthetic directory {0} has no metadata.csv sidecar")]
    MissingSidecar(PathBuf),
    #[error("unknown lesion superclass {value:?} for {image_id}")]
    UnknownSuperclass { image_id: String, value: String },
    #[error("synthetic image file for {0} not found")]
    MissingSyntheticFile(String),
    #[error("invalid split fractions {0:?}: must be nonnegative and sum to 1")]
    InvalidFractions([f64; 3]),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        Self::Csv {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Superclass {
    #[serde(rename = "melanocytic")]
    Melanocytic,
    #[serde(rename = "non_melanocytic")]
    NonMelanocytic,
}

impl Superclass {
    pub const ALL: [Superclass; 2] = [Superclass::Melanocytic, Superclass::NonMelanocytic];

    pub fn as_str(self) -> &'static str {
        match self {
            Superclass::Melanocytic => "melanocytic",
            Superclass::NonMelanocytic => "non_melanocytic",
        }
    }

    /// Positive class for binary classification is melanocytic.
    pub fn label(self) -> u8 {
        match self {
            Superclass::Melanocytic => 1,
            Superclass::NonMelanocytic => 0,
        }
    }
}

impl fmt::Display for Superclass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Superclass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "melanocytic" | "mel" | "1" => Ok(Superclass::Melanocytic),
            "non_melanocytic" | "nonmelanocytic" | "non_mel" | "0" => {
                Ok(Superclass::NonMelanocytic)
            }
            _ => Err(format!("unknown superclass {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

/// One manifest row. Column order is the on-disk CSV order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub path: PathBuf,
    pub diagnosis: String,
    pub superclass: Superclass,
    pub patient_id: String,
    pub source: Source,
    pub ita_degrees: Option<f64>,
    pub fitzpatrick: Option<Fitzpatrick>,
    pub split: Option<Split>,
}

/// An ordered collection of records with unique image ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    records: Vec<ImageRecord>,
}

#[derive(Serialize, Deserialize)]
struct ManifestJson {
    version: u32,
    synthetic_patient_prefix: String,
    records: Vec<ImageRecord>,
}

impl Manifest {
    pub fn new(records: Vec<ImageRecord>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.image_id.as_str()) {
                return Err(DatasetError::DuplicateId(r.image_id.clone()));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [ImageRecord] {
        &mut self.records
    }

    pub fn into_records(self) -> Vec<ImageRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    /// Keeps the records matching `keep`, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&ImageRecord) -> bool) -> Manifest {
        Manifest {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W, notes: &[(String, String)]) -> csv::Result<()> {
        let mut writer = writer;
        writeln!(writer, "# dermfair manifest v{MANIFEST_VERSION}")?;
        writeln!(writer, "# synthetic_patient_prefix={SYNTHETIC_PATIENT_PREFIX}")?;
        for (k, v) in notes {
            writeln!(writer, "# {k}={v}")?;
        }
        let mut w = csv::Writer::from_writer(writer);
        if self.records.is_empty() {
            w.write_record([
                "image_id",
                "path",
                "diagnosis",
                "superclass",
                "patient_id",
                "source",
                "ita_degrees",
                "fitzpatrick",
                "split",
            ])?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, csv::Error> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let records = rdr.deserialize().collect::<Result<Vec<ImageRecord>, _>>()?;
        // Duplicate ids surface as a csv error so readers keep one error type.
        Manifest::new(records).map_err(|e| {
            csv::Error::from(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                e.to_string(),
            ))
        })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file)).map_err(|e| DatasetError::csv(path, e))
    }

    /// Writes `<path>` as CSV and a `.json` twin next to it.
    pub fn save(&self, path: &Path, notes: &[(String, String)]) -> Result<(), DatasetError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| DatasetError::io(parent, e))?;
        }
        let file = std::fs::File::create(path).map_err(|e| DatasetError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), notes)
            .map_err(|e| DatasetError::csv(path, e))?;
        let json_path = path.with_extension("json");
        let json = ManifestJson {
            version: MANIFEST_VERSION,
            synthetic_patient_prefix: SYNTHETIC_PATIENT_PREFIX.to_string(),
            records: self.records.clone(),
        };
        let text = serde_json::to_string_pretty(&json)?;
        std::fs::write(&json_path, text + "\n").map_err(|e| DatasetError::io(&json_path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        let parsed: ManifestJson = serde_json::from_str(&text)?;
        Manifest::new(parsed.records)
    }
}
