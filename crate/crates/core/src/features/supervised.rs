//! Lagged (input visit → future visit) pairs.
//!
//! Lag 0 is the input visit itself and lag `j` is the patient's `j`-th
//! previous clinical visit. UPDRS values come from the preprocessed matrix;
//! lags that do not exist are zero-filled and flagged in the presence block.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::presence::{presence_column, presence_sets, top_peptides};
use crate::dataset::{Cohort, UPDRS_NAMES};
use crate::error::{Error, Result};
use crate::preprocess::{FeatureMatrix, FittedPreprocessor, MergeOptions, MEDICATION_COLUMNS, VISIT_MONTH_COLUMN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LagConfig {
    pub horizon_months: u32,
    pub lag_depth: usize,
    pub include_visit_month: bool,
    pub include_medication: bool,
    /// Width of the presence block. Lag-observed flags take the first
    /// `lag_depth - 1` slots and top peptides fill the rest.
    pub n_presence_peptides: usize,
}

impl Default for LagConfig {
    fn default() -> Self {
        LagConfig {
            horizon_months: 6,
            lag_depth: 2,
            include_visit_month: true,
            include_medication: true,
            n_presence_peptides: 15,
        }
    }
}

impl LagConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_months == 0 {
            return Err(Error::InvalidConfig("horizon_months must be positive".into()));
        }
        if self.lag_depth == 0 {
            return Err(Error::InvalidConfig("lag_depth must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_flags(&self) -> usize {
        self.lag_depth - 1
    }

    pub fn n_peptide_slots(&self) -> usize {
        self.n_presence_peptides.saturating_sub(self.n_flags())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub patient_id: i64,
    pub input_month: u32,
    pub target_month: u32,
}

/// How a flat input row maps onto a sequence: `lag_depth` blocks of the four
/// UPDRS parts (lag 0 first) followed by `n_static` per-pair features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub lag_depth: usize,
    pub n_static: usize,
}

impl FeatureLayout {
    pub fn n_features(&self) -> usize {
        4 * self.lag_depth + self.n_static
    }

    pub fn step_width(&self) -> usize {
        4 + self.n_static
    }

    /// Sequence view of one row, oldest lag first; each step is that lag's
    /// UPDRS block followed by the static block. Returned flattened,
    /// `lag_depth × step_width`.
    pub fn to_sequence(&self, row: &[f64]) -> Vec<f64> {
        let stat = &row[4 * self.lag_depth..];
        let mut out = Vec::with_capacity(self.lag_depth * self.step_width());
        for j in (0..self.lag_depth).rev() {
            out.extend_from_slice(&row[4 * j..4 * j + 4]);
            out.extend_from_slice(stat);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    pub n_features: usize,
    /// Row-major, `len() × n_features`.
    pub inputs: Vec<f64>,
    /// Raw UPDRS targets; NaN where `target_mask` is false.
    pub targets: Vec<[f64; 4]>,
    pub target_mask: Vec<[bool; 4]>,
    pub provenance: Vec<Provenance>,
    pub feature_names: Vec<String>,
    pub layout: FeatureLayout,
}

impl SupervisedSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn select(&self, rows: &[usize]) -> SupervisedSet {
        let mut inputs = Vec::with_capacity(rows.len() * self.n_features);
        for &r in rows {
            inputs.extend_from_slice(self.input_row(r));
        }
        SupervisedSet {
            n_features: self.n_features,
            inputs,
            targets: rows.iter().map(|&r| self.targets[r]).collect(),
            target_mask: rows.iter().map(|&r| self.target_mask[r]).collect(),
            provenance: rows.iter().map(|&r| self.provenance[r]).collect(),
            feature_names: self.feature_names.clone(),
            layout: self.layout,
        }
    }

    pub fn patient_ids(&self) -> BTreeSet<i64> {
        self.provenance.iter().map(|p| p.patient_id).collect()
    }

    pub fn select_patients(&self, patients: &BTreeSet<i64>) -> SupervisedSet {
        let rows: Vec<usize> = (0..self.len())
            .filter(|&r| patients.contains(&self.provenance[r].patient_id))
            .collect();
        self.select(&rows)
    }

    /// Writes `inputs.csv` (feature-name header) and `targets.csv`
    /// (`updrs_1..4`, blank when unobserved) into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("inputs.csv"))?;
        w.write_record(&self.feature_names)?;
        for r in 0..self.len() {
            w.write_record(self.input_row(r).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("targets.csv"))?;
        w.write_record(UPDRS_NAMES)?;
        for (t, m) in self.targets.iter().zip(&self.target_mask) {
            w.write_record((0..4).map(|k| if m[k] { t[k].to_string() } else { String::new() }))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Clinical visits per patient, sorted by month; the first record wins on
/// duplicate months.
fn clinical_visits(cohort: &Cohort) -> BTreeMap<i64, BTreeMap<u32, [Option<f64>; 4]>> {
    let mut out: BTreeMap<i64, BTreeMap<u32, [Option<f64>; 4]>> = BTreeMap::new();
    for r in &cohort.clinical {
        out.entry(r.patient_id)
            .or_default()
            .entry(r.visit_month)
            .or_insert(r.updrs);
    }
    out
}

/// Every `(patient, m, m + horizon)` with both clinical visits present and at
/// least one observed target part, in patient then month order.
pub fn enumerate_pairs(cohort: &Cohort, horizon: u32) -> Vec<Provenance> {
    let mut out = Vec::new();
    for (&pid, visits) in &clinical_visits(cohort) {
        for &m in visits.keys() {
            if let Some(target) = visits.get(&(m + horizon)) {
                if target.iter().any(Option::is_some) {
                    out.push(Provenance { patient_id: pid, input_month: m, target_month: m + horizon });
                }
            }
        }
    }
    out
}

/// Builds the supervised set, choosing the presence peptides from `cohort`.
pub fn build_supervised(
    cohort: &Cohort,
    prep: &FittedPreprocessor,
    lag: &LagConfig,
) -> Result<SupervisedSet> {
    let peptides = top_peptides(cohort, lag.n_peptide_slots());
    build_supervised_with(cohort, prep, lag, &peptides)
}

/// Builds the supervised set with an explicit presence-peptide list, as
/// needed when a trained model fixes its input layout.
pub fn build_supervised_with(
    cohort: &Cohort,
    prep: &FittedPreprocessor,
    lag: &LagConfig,
    peptides: &[String],
) -> Result<SupervisedSet> {
    lag.validate()?;
    let pairs = enumerate_pairs(cohort, lag.horizon_months);
    if pairs.is_empty() {
        return Err(Error::NoPairsProduced { horizon: lag.horizon_months });
    }

    let names: Vec<String> = prep.columns.iter().map(|c| c.name.clone()).collect();
    let matrix = FeatureMatrix::from_cohort(cohort, MergeOptions::modelling()).with_columns(&names);
    let processed = prep.apply(&matrix)?;
    let col = |name: &str| {
        processed
            .col_index(name)
            .ok_or_else(|| Error::ColumnMismatch(format!("preprocessed data lacks `{name}`")))
    };
    let updrs_cols: Vec<usize> = UPDRS_NAMES.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let month_col = if lag.include_visit_month { Some(col(VISIT_MONTH_COLUMN)?) } else { None };
    let med_cols: Vec<usize> = if lag.include_medication {
        MEDICATION_COLUMNS.iter().map(|n| col(n)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut feature_names = Vec::new();
    for j in 0..lag.lag_depth {
        for n in UPDRS_NAMES {
            feature_names.push(format!("{n}_lag{j}"));
        }
    }
    if month_col.is_some() {
        feature_names.push(VISIT_MONTH_COLUMN.to_string());
    }
    feature_names.extend(med_cols.iter().map(|&c| processed.col_names[c].clone()));
    feature_names.extend((1..lag.lag_depth).map(|j| format!("lag{j}_observed")));
    feature_names.extend(peptides.iter().map(|s| presence_column(s)));
    let layout = FeatureLayout {
        lag_depth: lag.lag_depth,
        n_static: feature_names.len() - 4 * lag.lag_depth,
    };

    let visits = clinical_visits(cohort);
    let presence = presence_sets(cohort);
    let n_features = feature_names.len();
    let mut inputs = Vec::with_capacity(pairs.len() * n_features);
    let mut targets = Vec::with_capacity(pairs.len());
    let mut target_mask = Vec::with_capacity(pairs.len());
    for p in &pairs {
        let months: Vec<u32> = visits[&p.patient_id].keys().copied().collect();
        let i = months.iter().position(|&m| m == p.input_month).expect("pair month is a visit");
        let input_row = processed
            .row_of((p.patient_id, p.input_month))
            .expect("clinical visits are matrix rows");
        let mut flags = Vec::with_capacity(lag.n_flags());
        for j in 0..lag.lag_depth {
            if j <= i {
                let r = processed
                    .row_of((p.patient_id, months[i - j]))
                    .expect("clinical visits are matrix rows");
                inputs.extend(updrs_cols.iter().map(|&c| processed.get(r, c).unwrap_or(0.0)));
            } else {
                inputs.extend([0.0; 4]);
            }
            if j > 0 {
                flags.push(if j <= i { 1.0 } else { 0.0 });
            }
        }
        if let Some(c) = month_col {
            inputs.push(processed.get(input_row, c).unwrap_or(0.0));
        }
        inputs.extend(med_cols.iter().map(|&c| processed.get(input_row, c).unwrap_or(0.0)));
        inputs.extend(flags);
        let key = (p.patient_id, p.input_month);
        inputs.extend(peptides.iter().map(|s| {
            let present = presence.get(s.as_str()).is_some_and(|set| set.contains(&key));
            if present { 1.0 } else { 0.0 }
        }));

        let t = visits[&p.patient_id][&p.target_month];
        targets.push(t.map(|v| v.unwrap_or(f64::NAN)));
        target_mask.push(t.map(|v| v.is_some()));
    }

    Ok(SupervisedSet {
        n_features,
        inputs,
        targets,
        target_mask,
        provenance: pairs,
        feature_names,
        layout,
    })
}
