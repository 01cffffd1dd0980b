//! The four-table clinical cohort: peptide abundances, protein NPX, clinical
//! UPDRS assessments and supplemental clinical records, keyed by patient and
//! visit month.

mod io;
mod profile;
mod synth;
mod validate;

pub use io::{load_cohort, write_cohort, CohortPaths};
pub use profile::{profile, DataProfile, SKEW_THRESHOLD};
pub use synth::{generate_synthetic, SynthConfig};
pub use validate::{validate_cohort, ValidationReport, Violation};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Upper bound of the summed MDS-UPDRS parts 1–4.
pub const UPDRS_MAX_TOTAL: f64 = 272.0;

/// Names of the four UPDRS parts, in target order.
pub const UPDRS_NAMES: [&str; 4] = ["updrs_1", "updrs_2", "updrs_3", "updrs_4"];

/// Levodopa state at the time of the assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Medication {
    On,
    Off,
    #[default]
    Missing,
}

impl Medication {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "On" => Some(Medication::On),
            "Off" => Some(Medication::Off),
            "" => Some(Medication::Missing),
            _ => None,
        }
    }

    pub fn as_csv(self) -> &'static str {
        match self {
            Medication::On => "On",
            Medication::Off => "Off",
            Medication::Missing => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeptideRecord {
    pub visit_id: String,
    pub visit_month: u32,
    pub patient_id: i64,
    pub uniprot_id: String,
    pub peptide_sequence: String,
    pub peptide_abundance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProteinRecord {
    pub visit_id: String,
    pub visit_month: u32,
    pub patient_id: i64,
    pub uniprot_id: String,
    pub npx: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    pub visit_id: String,
    pub patient_id: i64,
    pub visit_month: u32,
    /// UPDRS parts 1–4; `None` is a missing assessment, never a zero.
    pub updrs: [Option<f64>; 4],
    pub medication: Medication,
}

impl ClinicalRecord {
    /// Sum of the parts that are present.
    pub fn updrs_total(&self) -> f64 {
        self.updrs.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Cohort {
    pub peptides: Vec<PeptideRecord>,
    pub proteins: Vec<ProteinRecord>,
    pub clinical: Vec<ClinicalRecord>,
    pub supplemental: Vec<ClinicalRecord>,
}

/// Canonical visit id, `<patient>_<month>`.
pub fn visit_id(patient_id: i64, visit_month: u32) -> String {
    format!("{patient_id}_{visit_month}")
}

impl Cohort {
    /// Distinct patient ids across the clinical and supplemental tables.
    pub fn patient_ids(&self) -> BTreeSet<i64> {
        self.clinical
            .iter()
            .chain(&self.supplemental)
            .map(|r| r.patient_id)
            .collect()
    }

    /// Distinct peptide sequences, sorted.
    pub fn peptide_sequences(&self) -> BTreeSet<&str> {
        self.peptides
            .iter()
            .map(|p| p.peptide_sequence.as_str())
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.clinical.is_empty() && self.supplemental.is_empty()
    }
}
