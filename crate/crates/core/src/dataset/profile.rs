use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Cohort;
use crate::error::{Error, Result};
use crate::preprocess::{skewness, FeatureMatrix, MergeOptions};

/// Columns with |Fisher–Pearson skewness| above this count as skewed.
pub const SKEW_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataProfile {
    /// Distinct patients in the main clinical table.
    pub n_patients: usize,
    /// Patients that appear only in the supplemental table.
    pub n_supplemental_patients: usize,
    pub n_visits: usize,
    pub n_columns: usize,
    pub visit_months: BTreeSet<u32>,
    pub pct_skewed_columns: f64,
    pub pct_missing_cells: f64,
    pub per_column_missing: BTreeMap<String, f64>,
}

/// Profiles the merged measurement table (UPDRS parts, peptide abundances,
/// protein NPX) over clinical and supplemental visits.
pub fn profile(cohort: &Cohort) -> Result<DataProfile> {
    if cohort.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let m = FeatureMatrix::from_cohort(cohort, MergeOptions::profiling());
    let cells = (m.n_rows * m.n_cols) as f64;
    let skewed = (0..m.n_cols)
        .filter(|&c| {
            skewness(&m.observed(c))
                .map(|g| g.abs() > SKEW_THRESHOLD)
                .unwrap_or(false)
        })
        .count();
    let per_column_missing = (0..m.n_cols)
        .map(|c| {
            (
                m.col_names[c].clone(),
                100.0 * m.column_missing(c) as f64 / m.n_rows as f64,
            )
        })
        .collect();
    let main: BTreeSet<i64> = cohort.clinical.iter().map(|r| r.patient_id).collect();
    Ok(DataProfile {
        n_patients: main.len(),
        n_supplemental_patients: cohort.patient_ids().difference(&main).count(),
        n_visits: m.n_rows,
        n_columns: m.n_cols,
        visit_months: m.row_keys.iter().map(|k| k.1).collect(),
        pct_skewed_columns: 100.0 * skewed as f64 / m.n_cols as f64,
        pct_missing_cells: if cells > 0.0 { 100.0 * m.n_missing() as f64 / cells } else { 0.0 },
        per_column_missing,
    })
}

impl DataProfile {
    /// Aligned plain-text rendering.
    pub fn render(&self) -> String {
        let months: Vec<String> = self.visit_months.iter().map(|m| m.to_string()).collect();
        let mut worst: Vec<(&String, &f64)> = self.per_column_missing.iter().collect();
        worst.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
        let mut s = format!(
            "patients            {}\nsupplemental only   {}\nvisits              {}\ncolumns             {}\nvisit months        {}\nskewed columns (%)  {:.2}\nmissing cells (%)   {:.2}\nmost missing:\n",
            self.n_patients,
            self.n_supplemental_patients,
            self.n_visits,
            self.n_columns,
            months.join(","),
            self.pct_skewed_columns,
            self.pct_missing_cells
        );
        for (name, pct) in worst.into_iter().take(5) {
            s.push_str(&format!("  {name:<32} {pct:6.2}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{visit_id, ClinicalRecord, Medication};

    fn record(pid: i64, month: u32, updrs: [f64; 4]) -> ClinicalRecord {
        ClinicalRecord {
            visit_id: visit_id(pid, month),
            patient_id: pid,
            visit_month: month,
            updrs: updrs.map(Some),
            medication: Medication::On,
        }
    }

    #[test]
    fn complete_symmetric_cohort() {
        let cohort = Cohort {
            clinical: vec![
                record(1, 0, [1.0, 2.0, 3.0, 4.0]),
                record(1, 6, [2.0, 3.0, 4.0, 5.0]),
                record(2, 0, [3.0, 4.0, 5.0, 6.0]),
            ],
            ..Cohort::default()
        };
        let p = profile(&cohort).unwrap();
        assert_eq!(p.pct_missing_cells, 0.0);
        assert_eq!(p.pct_skewed_columns, 0.0);
        assert_eq!((p.n_patients, p.n_supplemental_patients), (2, 0));
        assert_eq!(p.visit_months, BTreeSet::from([0, 6]));
    }

    #[test]
    fn empty_cohort_is_an_error() {
        assert!(matches!(profile(&Cohort::default()), Err(Error::EmptyCohort)));
    }

    #[test]
    fn permutation_invariant() {
        let mut cohort = crate::dataset::generate_synthetic(&crate::dataset::SynthConfig {
            n_patients: 30,
            ..Default::default()
        })
        .unwrap();
        let a = profile(&cohort).unwrap();
        cohort.clinical.reverse();
        cohort.peptides.reverse();
        cohort.proteins.rotate_left(17);
        assert_eq!(a, profile(&cohort).unwrap());
    }
}
