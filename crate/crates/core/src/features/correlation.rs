use crate::error::{Error, Result};
use crate::preprocess::FeatureMatrix;

/// Pearson correlation over rows where both columns are observed.
///
/// A pair whose overlap has zero variance in either column has no defined
/// correlation and is reported as 0.
pub fn correlation_matrix(m: &FeatureMatrix, columns: &[usize]) -> Result<Vec<Vec<f64>>> {
    let k = columns.len();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        out[i][i] = 1.0;
        for j in (i + 1)..k {
            let (a, b) = (columns[i], columns[j]);
            let pairs: Vec<(f64, f64)> = (0..m.n_rows)
                .filter_map(|r| Some((m.get(r, a)?, m.get(r, b)?)))
                .collect();
            if pairs.len() < 2 {
                return Err(Error::InsufficientOverlap(
                    m.col_names[a].clone(),
                    m.col_names[b].clone(),
                ));
            }
            let r = pearson(&pairs);
            out[i][j] = r;
            out[j][i] = r;
        }
    }
    Ok(out)
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}
