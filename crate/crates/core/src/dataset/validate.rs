use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::{Cohort, UPDRS_MAX_TOTAL};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// A proteomic record whose visit has no clinical or supplemental row.
    OrphanedVisit { table: &'static str, visit_id: String },
    NegativeAbundance { visit_id: String, peptide: String, value: f64 },
    NegativeUpdrs { visit_id: String, part: usize, value: f64 },
    UpdrsSumExceeded { visit_id: String, total: f64 },
    VisitIdMismatch { visit_id: String, patient_id: i64, visit_month: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OrphanedVisit { table, visit_id } => {
                write!(f, "orphaned visit {visit_id} in {table}")
            }
            Violation::NegativeAbundance { visit_id, peptide, value } => {
                write!(f, "negative abundance {value} for {peptide} at {visit_id}")
            }
            Violation::NegativeUpdrs { visit_id, part, value } => {
                write!(f, "negative updrs_{part} {value} at {visit_id}")
            }
            Violation::UpdrsSumExceeded { visit_id, total } => {
                write!(f, "updrs sum exceeds 272 ({total}) at {visit_id}")
            }
            Violation::VisitIdMismatch { visit_id, patient_id, visit_month } => write!(
                f,
                "visit id {visit_id} is shared by different (patient, month) keys, including ({patient_id}, {visit_month})"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn orphaned_visits(&self) -> impl Iterator<Item = &str> {
        self.violations.iter().filter_map(|v| match v {
            Violation::OrphanedVisit { visit_id, .. } => Some(visit_id.as_str()),
            _ => None,
        })
    }
}

/// Collects schema-level data problems. Never mutates the cohort.
pub fn validate_cohort(cohort: &Cohort) -> ValidationReport {
    let mut out = Vec::new();
    let clinical_ids: HashSet<&str> = cohort
        .clinical
        .iter()
        .chain(&cohort.supplemental)
        .map(|r| r.visit_id.as_str())
        .collect();

    // One (patient, month) key per visit id across all tables.
    let mut key_of: HashMap<&str, (i64, u32)> = HashMap::new();
    let keys = cohort
        .clinical
        .iter()
        .chain(&cohort.supplemental)
        .map(|r| (r.visit_id.as_str(), (r.patient_id, r.visit_month)))
        .chain(cohort.peptides.iter().map(|p| (p.visit_id.as_str(), (p.patient_id, p.visit_month))))
        .chain(cohort.proteins.iter().map(|p| (p.visit_id.as_str(), (p.patient_id, p.visit_month))));
    let mut mismatched = HashSet::new();
    for (id, key) in keys {
        let first = *key_of.entry(id).or_insert(key);
        if first != key && mismatched.insert(id) {
            out.push(Violation::VisitIdMismatch {
                visit_id: id.to_string(),
                patient_id: key.0,
                visit_month: key.1,
            });
        }
    }

    for r in cohort.clinical.iter().chain(&cohort.supplemental) {
        for (k, v) in r.updrs.iter().enumerate() {
            if let Some(v) = v.filter(|v| *v < 0.0) {
                out.push(Violation::NegativeUpdrs {
                    visit_id: r.visit_id.clone(),
                    part: k + 1,
                    value: v,
                });
            }
        }
        let total = r.updrs_total();
        if total > UPDRS_MAX_TOTAL {
            out.push(Violation::UpdrsSumExceeded {
                visit_id: r.visit_id.clone(),
                total,
            });
        }
    }

    let mut reported: HashSet<(&'static str, &str)> = HashSet::new();
    for p in &cohort.peptides {
        if !clinical_ids.contains(p.visit_id.as_str()) && reported.insert(("peptides", &p.visit_id)) {
            out.push(Violation::OrphanedVisit {
                table: "peptides",
                visit_id: p.visit_id.clone(),
            });
        }
        if let Some(v) = p.peptide_abundance.filter(|v| *v < 0.0) {
            out.push(Violation::NegativeAbundance {
                visit_id: p.visit_id.clone(),
                peptide: p.peptide_sequence.clone(),
                value: v,
            });
        }
    }
    for p in &cohort.proteins {
        if !clinical_ids.contains(p.visit_id.as_str()) && reported.insert(("proteins", &p.visit_id)) {
            out.push(Violation::OrphanedVisit {
                table: "proteins",
                visit_id: p.visit_id.clone(),
            });
        }
    }
    ValidationReport { violations: out }
}
