use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{mse, rmse, smape};
use super::train::TargetScaler;
use crate::dataset::UPDRS_NAMES;
use crate::error::{Error, Result};
use crate::features::SupervisedSet;
use crate::models::Forecaster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub smape: f64,
    pub mse: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub target: String,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `(updrs_k, metrics)` in target order.
    pub per_target: Vec<(String, Metrics)>,
    pub average: Metrics,
    pub predictions: Vec<Prediction>,
}

/// Scores predictions in the original score scale over observed entries.
pub fn evaluate_predictions(set: &SupervisedSet, predicted: &[[f64; 4]]) -> Result<EvalReport> {
    if predicted.len() != set.len() {
        return Err(Error::LengthMismatch(set.len(), predicted.len()));
    }
    let mut per_target = Vec::with_capacity(4);
    let mut predictions = Vec::new();
    for (k, name) in UPDRS_NAMES.iter().enumerate() {
        let rows: Vec<usize> = (0..set.len()).filter(|&r| set.target_mask[r][k]).collect();
        if rows.is_empty() {
            return Err(Error::NoObservedTargets(name.to_string()));
        }
        let a: Vec<f64> = rows.iter().map(|&r| set.targets[r][k]).collect();
        let p: Vec<f64> = rows.iter().map(|&r| predicted[r][k]).collect();
        per_target.push((name.to_string(), Metrics { smape: smape(&a, &p)?, mse: mse(&a, &p)?, rmse: rmse(&a, &p)? }));
        predictions.extend(a.iter().zip(&p).map(|(&actual, &predicted)| Prediction { target: name.to_string(), actual, predicted }));
    }
    let mean = |f: fn(&Metrics) -> f64| per_target.iter().map(|(_, m)| f(m)).sum::<f64>() / 4.0;
    let average = Metrics { smape: mean(|m| m.smape), mse: mean(|m| m.mse), rmse: mean(|m| m.rmse) };
    Ok(EvalReport { per_target, average, predictions })
}

/// De-standardized model predictions for every row of `set`.
pub fn predict_scores(model: &Forecaster, scaler: &TargetScaler, set: &SupervisedSet) -> Result<Vec<[f64; 4]>> {
    let y = model.predict(&model.prepare_inputs(set)?)?;
    Ok((0..set.len())
        .map(|r| {
            let row = y.row(r);
            std::array::from_fn(|k| scaler.unscale(k, row[k]))
        })
        .collect())
}

pub fn evaluate(model: &Forecaster, scaler: &TargetScaler, set: &SupervisedSet) -> Result<EvalReport> {
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    evaluate_predictions(set, &predict_scores(model, scaler, set)?)
}

/// Predicts the training mean of each target for every row.
pub fn mean_baseline(scaler: &TargetScaler, set: &SupervisedSet) -> Result<EvalReport> {
    evaluate_predictions(set, &vec![scaler.mean; set.len()])
}

impl EvalReport {
    fn rows(&self) -> Vec<(&str, &Metrics)> {
        let mut out: Vec<(&str, &Metrics)> = self.per_target.iter().map(|(n, m)| (n.as_str(), m)).collect();
        out.push(("Average", &self.average));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,smape,mse,rmse\n");
        for (n, m) in self.rows() {
            let _ = writeln!(out, "{n},{},{},{}", m.smape, m.mse, m.rmse);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<10} {:>10} {:>10} {:>10}\n", "Target", "SMAPE", "MSE", "RMSE");
        for (n, m) in self.rows() {
            let _ = writeln!(out, "{n:<10} {:>10.2} {:>10.2} {:>10.2}", m.smape, m.mse, m.rmse);
        }
        out
    }

    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("target,actual,predicted\n");
        for p in &self.predictions {
            let _ = writeln!(out, "{},{},{}", p.target, p.actual, p.predicted);
        }
        out
    }

    /// Writes `metrics.csv`, `metrics.txt` and `predictions.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.csv"), self.to_csv())?;
        std::fs::write(dir.join("metrics.txt"), self.to_text())?;
        std::fs::write(dir.join("predictions.csv"), self.predictions_csv())?;
        Ok(())
    }
}
