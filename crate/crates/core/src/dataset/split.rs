use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::{DatasetError, ImageRecord, Manifest, Source, Split};
use crate::seed::rng_for;
use crate::skintone::Fitzpatrick;

/// Coarse tone group used as a stratification axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ToneGroup {
    Light,
    Dark,
    Uncertain,
}

impl ToneGroup {
    pub fn of(fitzpatrick: Option<Fitzpatrick>) -> Self {
        match fitzpatrick {
            Some(f) if f.is_dark() => ToneGroup::Dark,
            Some(Fitzpatrick::Uncertain) | None => ToneGroup::Uncertain,
            Some(_) => ToneGroup::Light,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ToneGroup::Light => "I-IV",
            ToneGroup::Dark => "V-VI",
            ToneGroup::Uncertain => "uncertain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StratKey {
    Superclass,
    /// Grouped as I–IV, V–VI, uncertain.
    Fitzpatrick,
    Source,
}

impl StratKey {
    fn value(self, r: &ImageRecord) -> &'static str {
        match self {
            StratKey::Superclass => r.superclass.as_str(),
            StratKey::Fitzpatrick => ToneGroup::of(r.fitzpatrick).as_str(),
            StratKey::Source => match r.source {
                Source::Real => "real",
                Source::Synthetic => "synthetic",
            },
        }
    }
}

impl FromStr for StratKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "superclass" => Ok(StratKey::Superclass),
            "fitzpatrick" => Ok(StratKey::Fitzpatrick),
            "source" => Ok(StratKey::Source),
            other => Err(format!("unknown stratification key {other:?}")),
        }
    }
}

impl fmt::Display for StratKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StratKey::Superclass => "superclass",
            StratKey::Fitzpatrick => "fitzpatrick",
            StratKey::Source => "source",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    /// Train, validation, test.
    pub fractions: [f64; 3],
    pub strat_keys: Vec<StratKey>,
    pub seed: u64,
    /// Force every synthetic record into the training split.
    pub synthetic_train_only: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            fractions: [0.70, 0.15, 0.15],
            strat_keys: vec![StratKey::Superclass, StratKey::Fitzpatrick],
            seed: 42,
            synthetic_train_only: false,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let sum: f64 = self.fractions.iter().sum();
        if self.fractions.iter().any(|f| !f.is_finite() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidFractions(self.fractions));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StratumSummary {
    pub stratum: String,
    pub patients: usize,
    pub images: usize,
    pub targets: [f64; 3],
    pub assigned: [usize; 3],
    pub max_patient_images: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SplitSummary {
    pub images: [usize; 3],
    pub patients: [usize; 3],
    pub forced_synthetic_train: usize,
    pub strata: Vec<StratumSummary>,
}

struct Patient<'a> {
    id: &'a str,
    records: Vec<usize>,
}

/// Assigns every record to train/val/test with all images of a patient in one
/// split.
///
/// Each patient's stratum is the most common key tuple among its records
/// (ties go to the lexicographically smallest). Within a stratum, patients are
/// sorted by id, shuffled with a seed derived from the run seed and stratum
/// label, then handed one at a time to the split with the largest remaining
/// image deficit (ties resolved train, val, test).
pub fn split(manifest: &Manifest, spec: &SplitSpec) -> Result<(Manifest, SplitSummary), DatasetError> {
    spec.validate()?;
    let records = manifest.records();
    let mut assignment: Vec<Option<Split>> = vec![None; records.len()];
    let mut forced = 0;

    let mut patients: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if spec.synthetic_train_only && r.source == Source::Synthetic {
            assignment[i] = Some(Split::Train);
            forced += 1;
            continue;
        }
        patients.entry(r.patient_id.as_str()).or_default().push(i);
    }

    let mut strata: BTreeMap<String, Vec<Patient>> = BTreeMap::new();
    for (id, idxs) in patients {
        let mut votes: BTreeMap<String, usize> = BTreeMap::new();
        for &i in &idxs {
            let label = spec
                .strat_keys
                .iter()
                .map(|k| k.value(&records[i]))
                .collect::<Vec<_>>()
                .join("/");
            *votes.entry(label).or_default() += 1;
        }
        let best = votes.values().copied().max().unwrap_or(0);
        let label = votes
            .into_iter()
            .find(|(_, n)| *n == best)
            .map(|(l, _)| l)
            .unwrap_or_default();
        strata.entry(label).or_default().push(Patient { id, records: idxs });
    }

    let mut ordered: Vec<(String, Vec<Patient>)> = strata.into_iter().collect();
    ordered.sort_by(|a, b| {
        let na: usize = a.1.iter().map(|p| p.records.len()).sum();
        let nb: usize = b.1.iter().map(|p| p.records.len()).sum();
        nb.cmp(&na).then_with(|| a.0.cmp(&b.0))
    });

    let mut summary = SplitSummary {
        images: [0; 3],
        patients: [0; 3],
        forced_synthetic_train: forced,
        strata: Vec::with_capacity(ordered.len()),
    };
    summary.images[0] += forced;

    for (label, mut group) in ordered {
        // Patients arrive sorted by id from the BTreeMap.
        debug_assert!(group.windows(2).all(|w| w[0].id < w[1].id));
        let mut rng = rng_for(spec.seed, &format!("split/{label}"));
        group.shuffle(&mut rng);
        let total: usize = group.iter().map(|p| p.records.len()).sum();
        let targets = spec.fractions.map(|f| f * total as f64);
        let mut assigned = [0usize; 3];
        for p in &group {
            let mut best = 0;
            let mut best_deficit = f64::NEG_INFINITY;
            for (s, (&t, &a)) in targets.iter().zip(&assigned).enumerate() {
                let deficit = t - a as f64;
                if deficit > best_deficit {
                    best = s;
                    best_deficit = deficit;
                }
            }
            assigned[best] += p.records.len();
            summary.patients[best] += 1;
            for &i in &p.records {
                assignment[i] = Some(Split::ALL[best]);
            }
        }
        for s in 0..3 {
            summary.images[s] += assigned[s];
        }
        summary.strata.push(StratumSummary {
            stratum: label,
            patients: group.len(),
            images: total,
            targets,
            assigned,
            max_patient_images: group.iter().map(|p| p.records.len()).max().unwrap_or(0),
        });
    }

    let out: Vec<ImageRecord> = records
        .iter()
        .zip(assignment)
        .map(|(r, s)| ImageRecord {
            split: s,
            ..r.clone()
        })
        .collect();
    Ok((Manifest::new(out)?, summary))
}
