use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{Cohort, Medication, UPDRS_NAMES};
use crate::error::{Error, Result};

pub const VISIT_MONTH_COLUMN: &str = "visit_month";

pub fn peptide_column(seq: &str) -> String {
    format!("peptide:{seq}")
}

pub fn protein_column(uniprot: &str) -> String {
    format!("protein:{uniprot}")
}

/// Dense row-major matrix with an explicit observed mask.
///
/// Unobserved cells hold NaN, but every reader goes through the mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub col_names: Vec<String>,
    /// `(patient_id, visit_month)` per row.
    pub row_keys: Vec<(i64, u32)>,
    /// Medication state per row; `Missing` for visits without a clinical record.
    pub medication: Vec<Medication>,
}

/// Which tables and columns go into the merged visit table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeOptions {
    pub include_supplemental: bool,
    pub include_visit_month: bool,
    pub include_peptides: bool,
    pub include_proteins: bool,
}

impl MergeOptions {
    /// Measurement columns over every visit, as used for profiling.
    pub fn profiling() -> Self {
        MergeOptions {
            include_supplemental: true,
            include_visit_month: false,
            include_peptides: true,
            include_proteins: true,
        }
    }

    /// The table the preprocessor is fitted on for modelling.
    pub fn modelling() -> Self {
        MergeOptions {
            include_supplemental: false,
            include_visit_month: true,
            include_peptides: true,
            include_proteins: true,
        }
    }
}

impl FeatureMatrix {
    /// Builds a matrix from column-major data; `None` cells are unobserved.
    pub fn from_columns(
        col_names: Vec<String>,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        let n_cols = columns.len();
        if col_names.len() != n_cols {
            return Err(Error::ShapeMismatch(format!(
                "{} names for {} columns",
                col_names.len(),
                n_cols
            )));
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::ShapeMismatch("ragged columns".into()));
        }
        let mut m = FeatureMatrix::empty(col_names, (0..n_rows).map(|r| (r as i64, 0)).collect());
        for (c, col) in columns.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                if let Some(v) = v {
                    m.set(r, c, *v);
                }
            }
        }
        Ok(m)
    }

    /// All cells unobserved.
    pub fn empty(col_names: Vec<String>, row_keys: Vec<(i64, u32)>) -> Self {
        let n_rows = row_keys.len();
        let n_cols = col_names.len();
        FeatureMatrix {
            n_rows,
            n_cols,
            values: vec![f64::NAN; n_rows * n_cols],
            mask: vec![false; n_rows * n_cols],
            col_names,
            row_keys,
            medication: vec![Medication::Missing; n_rows],
        }
    }

    /// Merged visit table: one row per `(patient, month)` present in any
    /// included table (orphaned proteomic visits included), sorted by key.
    pub fn from_cohort(cohort: &Cohort, opts: MergeOptions) -> Self {
        let mut clinical: BTreeMap<(i64, u32), &crate::dataset::ClinicalRecord> = BTreeMap::new();
        let supplemental: &[crate::dataset::ClinicalRecord] = if opts.include_supplemental {
            &cohort.supplemental
        } else {
            &[]
        };
        for r in cohort.clinical.iter().chain(supplemental) {
            clinical.entry((r.patient_id, r.visit_month)).or_insert(r);
        }

        let mut keys: BTreeSet<(i64, u32)> = clinical.keys().copied().collect();
        let mut peptides = BTreeSet::new();
        let mut proteins = BTreeSet::new();
        if opts.include_peptides {
            for p in &cohort.peptides {
                keys.insert((p.patient_id, p.visit_month));
                peptides.insert(p.peptide_sequence.as_str());
            }
        }
        if opts.include_proteins {
            for p in &cohort.proteins {
                keys.insert((p.patient_id, p.visit_month));
                proteins.insert(p.uniprot_id.as_str());
            }
        }

        let mut names = Vec::new();
        if opts.include_visit_month {
            names.push(VISIT_MONTH_COLUMN.to_string());
        }
        let updrs_base = names.len();
        names.extend(UPDRS_NAMES.iter().map(|s| s.to_string()));
        let pep_base = names.len();
        names.extend(peptides.iter().map(|s| peptide_column(s)));
        let prot_base = names.len();
        names.extend(proteins.iter().map(|s| protein_column(s)));

        let keys: Vec<(i64, u32)> = keys.into_iter().collect();
        let row_of: BTreeMap<(i64, u32), usize> =
            keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let mut m = FeatureMatrix::empty(names, keys.clone());

        for (r, key) in keys.iter().enumerate() {
            if opts.include_visit_month {
                m.set(r, 0, f64::from(key.1));
            }
            if let Some(rec) = clinical.get(key) {
                m.medication[r] = rec.medication;
                for (k, v) in rec.updrs.iter().enumerate() {
                    if let Some(v) = v {
                        m.set(r, updrs_base + k, *v);
                    }
                }
            }
        }

        // Duplicate (visit, feature) records are averaged.
        let mut acc: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        if opts.include_peptides {
            let col_of: BTreeMap<&str, usize> =
                peptides.iter().enumerate().map(|(i, s)| (*s, pep_base + i)).collect();
            for p in &cohort.peptides {
                if let Some(v) = p.peptide_abundance {
                    let e = acc
                        .entry((row_of[&(p.patient_id, p.visit_month)], col_of[p.peptide_sequence.as_str()]))
                        .or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
            }
        }
        if opts.include_proteins {
            let col_of: BTreeMap<&str, usize> =
                proteins.iter().enumerate().map(|(i, s)| (*s, prot_base + i)).collect();
            for p in &cohort.proteins {
                if let Some(v) = p.npx {
                    let e = acc
                        .entry((row_of[&(p.patient_id, p.visit_month)], col_of[p.uniprot_id.as_str()]))
                        .or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
            }
        }
        for ((r, c), (sum, n)) in acc {
            m.set(r, c, sum / n as f64);
        }
        m
    }

    #[inline]
    pub fn idx(&self, r: usize, c: usize) -> usize {
        r * self.n_cols + c
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let i = self.idx(r, c);
        self.mask[i].then(|| self.values[i])
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let i = self.idx(r, c);
        self.values[i] = v;
        self.mask[i] = true;
    }

    pub fn unset(&mut self, r: usize, c: usize) {
        let i = self.idx(r, c);
        self.values[i] = f64::NAN;
        self.mask[i] = false;
    }

    pub fn col_index(&self, name: &str) -> Option<usize> {
        self.col_names.iter().position(|n| n == name)
    }

    /// Observed values of column `c`, in row order.
    pub fn observed(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows).filter_map(|r| self.get(r, c)).collect()
    }

    pub fn n_missing(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    pub fn column_missing(&self, c: usize) -> usize {
        (0..self.n_rows).filter(|&r| !self.mask[self.idx(r, c)]).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Row subset, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = FeatureMatrix::empty(
            self.col_names.clone(),
            rows.iter().map(|&r| self.row_keys[r]).collect(),
        );
        for (i, &r) in rows.iter().enumerate() {
            out.medication[i] = self.medication[r];
            for c in 0..self.n_cols {
                let (src, dst) = (self.idx(r, c), out.idx(i, c));
                out.values[dst] = self.values[src];
                out.mask[dst] = self.mask[src];
            }
        }
        out
    }

    /// Rows whose patient id satisfies `keep`.
    pub fn select_patients(&self, keep: impl Fn(i64) -> bool) -> Self {
        let rows: Vec<usize> = (0..self.n_rows)
            .filter(|&r| keep(self.row_keys[r].0))
            .collect();
        self.select_rows(&rows)
    }

    /// Reorders columns to `names`; columns absent here come back unobserved.
    pub fn with_columns(&self, names: &[String]) -> Self {
        let mut out = FeatureMatrix::empty(names.to_vec(), self.row_keys.clone());
        out.medication = self.medication.clone();
        for (c_out, name) in names.iter().enumerate() {
            if let Some(c_in) = self.col_index(name) {
                for r in 0..self.n_rows {
                    if let Some(v) = self.get(r, c_in) {
                        out.set(r, c_out, v);
                    }
                }
            }
        }
        out
    }

    pub fn row_of(&self, key: (i64, u32)) -> Option<usize> {
        self.row_keys.binary_search(&key).ok().or_else(|| self.row_keys.iter().position(|k| *k == key))
    }
}
