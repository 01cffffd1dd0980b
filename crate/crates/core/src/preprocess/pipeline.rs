//! The fitted preprocessing pipeline: power transform, imputation,
//! standardisation, then the medication one-hot block appended.
//!
//! Transforms run first so Box-Cox always sees its fitted domain. Soft-impute
//! works on columns z-scored with the pre-imputation statistics and its
//! output is mapped back before the final standardisation, which is fitted on
//! the imputed training matrix.

use serde::{Deserialize, Serialize};

use super::missing::soft_impute_from;
use super::{
    classify_missingness, fit_standardizer, select_transform, standardize_value, FeatureMatrix,
    ImputeConfig, Missingness, TransformSpec,
};
use crate::dataset::Medication;
use crate::error::{Error, Result};

pub const PREPROCESSOR_VERSION: u32 = 1;
pub const MEDICATION_COLUMNS: [&str; 3] = ["med_on", "med_off", "med_missing"];

/// `On → [1,0,0]`, `Off → [0,1,0]`, `Missing → [0,0,1]`.
pub fn one_hot_medication(status: Medication) -> [f64; 3] {
    match status {
        Medication::On => [1.0, 0.0, 0.0],
        Medication::Off => [0.0, 1.0, 0.0],
        Medication::Missing => [0.0, 0.0, 1.0],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Apply skew-reducing transforms.
    pub transform: bool,
    pub impute: ImputeConfig,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            transform: true,
            impute: ImputeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnState {
    pub name: String,
    pub transform: TransformSpec,
    /// `None` when the column was fully observed at fit time.
    pub missingness: Option<Missingness>,
    /// Observed mean/std after the transform, before imputation.
    pub raw_mean: f64,
    pub raw_std: f64,
    /// Standardisation parameters, fitted after imputation.
    pub mean: f64,
    pub std: f64,
}

/// Immutable after fit; `apply` only reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPreprocessor {
    pub version: u32,
    pub columns: Vec<ColumnState>,
    pub impute: ImputeConfig,
    pub medication_columns: Vec<String>,
}

impl FittedPreprocessor {
    /// Fits every stage on `train`, which must contain training rows only.
    pub fn fit(train: &FeatureMatrix, config: &PreprocessConfig) -> Result<Self> {
        let mut columns = Vec::with_capacity(train.n_cols);
        for c in 0..train.n_cols {
            let obs = train.observed(c);
            if obs.is_empty() {
                return Err(Error::AllMissingColumn(train.col_names[c].clone()));
            }
            let transform = if config.transform {
                match select_transform(&obs) {
                    Ok(t) => t,
                    Err(Error::TooFewValues { .. }) => TransformSpec::IDENTITY,
                    Err(e) => return Err(e),
                }
            } else {
                TransformSpec::IDENTITY
            };
            columns.push(ColumnState {
                name: train.col_names[c].clone(),
                transform,
                missingness: None,
                raw_mean: 0.0,
                raw_std: 0.0,
                mean: 0.0,
                std: 0.0,
            });
        }
        let mut fitted = FittedPreprocessor {
            version: PREPROCESSOR_VERSION,
            columns,
            impute: config.impute,
            medication_columns: MEDICATION_COLUMNS.iter().map(|s| s.to_string()).collect(),
        };

        let transformed = fitted.transform(train);
        let (raw_means, raw_stds) = fit_standardizer(&transformed);
        let classes = classify_missingness(&transformed);
        for (c, col) in fitted.columns.iter_mut().enumerate() {
            col.raw_mean = raw_means[c];
            col.raw_std = raw_stds[c];
            col.missingness = classes.get(&col.name).copied();
        }
        let imputed = fitted.impute(&transformed)?;
        let (means, stds) = fit_standardizer(&imputed);
        for (c, col) in fitted.columns.iter_mut().enumerate() {
            col.mean = means[c];
            col.std = stds[c];
        }
        Ok(fitted)
    }

    pub fn n_inputs(&self) -> usize {
        self.columns.len()
    }

    /// Output column names: the fitted columns followed by the one-hot block.
    pub fn output_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .map(|c| c.name.clone())
            .chain(self.medication_columns.iter().cloned())
            .collect()
    }

    fn check_columns(&self, m: &FeatureMatrix) -> Result<()> {
        if m.n_cols != self.columns.len()
            || m.col_names.iter().zip(&self.columns).any(|(a, b)| *a != b.name)
        {
            return Err(Error::ColumnMismatch(format!(
                "expected {} fitted columns, got {}",
                self.columns.len(),
                m.n_cols
            )));
        }
        Ok(())
    }

    fn transform(&self, m: &FeatureMatrix) -> FeatureMatrix {
        let mut out = m.clone();
        for r in 0..m.n_rows {
            for (c, col) in self.columns.iter().enumerate() {
                if let Some(v) = m.get(r, c) {
                    out.set(r, c, col.transform.apply(v));
                }
            }
        }
        out
    }

    fn impute(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        let mut out = m.clone();
        // MCAR (and anything unseen at fit time): training mean.
        let mut soft_cols = Vec::new();
        for (c, col) in self.columns.iter().enumerate() {
            match col.missingness {
                Some(Missingness::Mar) | Some(Missingness::Mnar) => soft_cols.push(c),
                _ => {
                    for r in 0..m.n_rows {
                        if m.get(r, c).is_none() {
                            out.set(r, c, col.raw_mean);
                        }
                    }
                }
            }
        }
        let needs_soft = soft_cols
            .iter()
            .any(|&c| (0..m.n_rows).any(|r| m.get(r, c).is_none()));
        if !needs_soft {
            return Ok(out);
        }

        let scale = |c: usize| {
            let s = self.columns[c].raw_std;
            if s > 0.0 { s } else { 1.0 }
        };
        let mut scaled = out.clone();
        for r in 0..m.n_rows {
            for c in 0..m.n_cols {
                if let Some(v) = out.get(r, c) {
                    scaled.set(r, c, (v - self.columns[c].raw_mean) / scale(c));
                }
            }
        }
        let init = vec![0.0; m.n_cols];
        let filled = soft_impute_from(&scaled, &init, &self.impute)?.matrix;
        for r in 0..m.n_rows {
            for &c in &soft_cols {
                if out.get(r, c).is_none() {
                    let v = filled.get(r, c).expect("soft impute fills every cell");
                    out.set(r, c, v * scale(c) + self.columns[c].raw_mean);
                }
            }
        }
        Ok(out)
    }

    /// Runs the fitted pipeline. The output is fully observed and carries the
    /// three medication columns appended.
    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check_columns(m)?;
        let imputed = self.impute(&self.transform(m))?;
        let mut out = FeatureMatrix::empty(self.output_names(), m.row_keys.clone());
        out.medication = m.medication.clone();
        let base = self.columns.len();
        for r in 0..m.n_rows {
            for (c, col) in self.columns.iter().enumerate() {
                let v = imputed.get(r, c).expect("imputation fills every cell");
                out.set(r, c, standardize_value(v, col.mean, col.std));
            }
            for (k, v) in one_hot_medication(m.medication[r]).into_iter().enumerate() {
                out.set(r, base + k, v);
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: FittedPreprocessor = serde_json::from_str(text)?;
        if p.version != PREPROCESSOR_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported preprocessor version {}",
                p.version
            )));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthConfig, SKEW_THRESHOLD};
    use crate::preprocess::{skewness, MergeOptions};

    fn skewed_count(m: &FeatureMatrix, cols: usize) -> usize {
        (0..cols)
            .filter(|&c| skewness(&m.observed(c)).map(|g| g.abs() > SKEW_THRESHOLD).unwrap_or(false))
            .count()
    }

    fn train_matrix() -> FeatureMatrix {
        let cohort = generate_synthetic(&SynthConfig { n_patients: 80, ..Default::default() }).unwrap();
        FeatureMatrix::from_cohort(&cohort, MergeOptions::modelling())
    }

    #[test]
    fn one_hot_conventions() {
        assert_eq!(one_hot_medication(Medication::On), [1.0, 0.0, 0.0]);
        assert_eq!(one_hot_medication(Medication::Off), [0.0, 1.0, 0.0]);
        assert_eq!(one_hot_medication(Medication::Missing), [0.0, 0.0, 1.0]);
        for s in [Medication::On, Medication::Off, Medication::Missing] {
            assert_eq!(one_hot_medication(s).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn fit_apply_reduces_skew_and_standardizes() {
        let m = train_matrix();
        let p = FittedPreprocessor::fit(&m, &PreprocessConfig::default()).unwrap();
        let out = p.apply(&m).unwrap();
        assert!(out.is_complete());
        assert_eq!(out.n_cols, m.n_cols + 3);
        let before = skewed_count(&m, m.n_cols);
        let after = skewed_count(&out, m.n_cols);
        assert!(before > 0);
        assert!(after * 2 <= before, "{before} -> {after}");
        for c in 0..m.n_cols {
            let v = out.observed(c);
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-9, "{} mean {mean}", m.col_names[c]);
            if p.columns[c].std > 0.0 {
                assert!((sd - 1.0).abs() < 1e-9, "{} sd {sd}", m.col_names[c]);
            }
        }
    }

    #[test]
    fn apply_is_deterministic_and_serializable() {
        let m = train_matrix();
        let p = FittedPreprocessor::fit(&m, &PreprocessConfig::default()).unwrap();
        assert_eq!(p.apply(&m).unwrap(), p.apply(&m).unwrap());
        let back = FittedPreprocessor::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn unseen_category_and_rows_are_handled() {
        let m = train_matrix();
        let half = m.select_patients(|p| p % 2 == 0);
        let other = m.select_patients(|p| p % 2 == 1);
        let p = FittedPreprocessor::fit(&half, &PreprocessConfig::default()).unwrap();
        let mut other = other;
        for med in other.medication.iter_mut() {
            *med = Medication::Off;
        }
        let out = p.apply(&other).unwrap();
        assert!(out.is_complete());
        let off = out.col_index("med_off").unwrap();
        assert!(out.observed(off).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn column_mismatch_is_rejected() {
        let m = train_matrix();
        let p = FittedPreprocessor::fit(&m, &PreprocessConfig::default()).unwrap();
        let mut renamed = m.clone();
        renamed.col_names[1] = "bogus".into();
        assert!(matches!(p.apply(&renamed), Err(Error::ColumnMismatch(_))));
    }
}
