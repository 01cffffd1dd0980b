use super::FeatureMatrix;

/// Columns with a population std at or below this (relative to the mean
/// magnitude) are treated as constant and map to 0.
const CONSTANT_TOL: f64 = 1e-12;

/// Per-column mean and population std over observed entries.
pub fn fit_standardizer(m: &FeatureMatrix) -> (Vec<f64>, Vec<f64>) {
    let mut means = vec![0.0; m.n_cols];
    let mut stds = vec![0.0; m.n_cols];
    for c in 0..m.n_cols {
        let obs = m.observed(c);
        if obs.is_empty() {
            continue;
        }
        let n = obs.len() as f64;
        let mean = obs.iter().sum::<f64>() / n;
        let var = obs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        means[c] = mean;
        let std = var.sqrt();
        stds[c] = if std <= CONSTANT_TOL * mean.abs().max(1.0) { 0.0 } else { std };
    }
    (means, stds)
}

pub fn standardize_value(x: f64, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        (x - mean) / std
    } else {
        0.0
    }
}

/// Standardises observed entries; unobserved cells stay unobserved.
pub fn standardize(m: &FeatureMatrix, means: &[f64], stds: &[f64]) -> FeatureMatrix {
    let mut out = m.clone();
    for r in 0..m.n_rows {
        for c in 0..m.n_cols {
            if let Some(v) = m.get(r, c) {
                out.set(r, c, standardize_value(v, means[c], stds[c]));
            }
        }
    }
    out
}
