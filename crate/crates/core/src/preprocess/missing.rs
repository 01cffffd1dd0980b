//! Missingness classification and the two imputers (column mean for MCAR,
//! iterative SVD soft-thresholding for everything else).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

/// Largest |point-biserial r| with another column still considered MCAR.
pub const MCAR_MAX_CORRELATION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Missingness {
    Mcar,
    Mar,
    Mnar,
}

/// Point-biserial correlation between a 0/1 indicator and a real variable.
/// `None` when either side is constant.
pub fn point_biserial(indicator: &[bool], values: &[f64]) -> Option<f64> {
    let n = indicator.len() as f64;
    if n < 2.0 {
        return None;
    }
    let mi = indicator.iter().filter(|&&b| b).count() as f64 / n;
    let mv = values.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&b, &v) in indicator.iter().zip(values) {
        let dx = if b { 1.0 } else { 0.0 } - mi;
        let dy = v - mv;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Classifies each column that has missing cells. A column is MCAR when its
/// missing-indicator correlates with no other column beyond
/// [`MCAR_MAX_CORRELATION`]; otherwise MAR. Fully observed columns are absent.
pub fn classify_missingness(m: &FeatureMatrix) -> BTreeMap<String, Missingness> {
    let mut out = BTreeMap::new();
    for j in 0..m.n_cols {
        if m.column_missing(j) == 0 {
            continue;
        }
        let mut max_r = 0.0f64;
        for k in (0..m.n_cols).filter(|&k| k != j) {
            let (ind, vals): (Vec<bool>, Vec<f64>) = (0..m.n_rows)
                .filter_map(|r| m.get(r, k).map(|v| (m.get(r, j).is_none(), v)))
                .unzip();
            if let Some(r) = point_biserial(&ind, &vals) {
                max_r = max_r.max(r.abs());
            }
        }
        let class = if max_r <= MCAR_MAX_CORRELATION {
            Missingness::Mcar
        } else {
            Missingness::Mar
        };
        out.insert(m.col_names[j].clone(), class);
    }
    out
}

/// Fills the missing cells of `columns` with that column's observed mean.
pub fn mean_impute(m: &FeatureMatrix, columns: &[usize]) -> Result<FeatureMatrix> {
    let mut out = m.clone();
    for &c in columns {
        let obs = m.observed(c);
        if obs.is_empty() {
            return Err(Error::AllMissingColumn(m.col_names[c].clone()));
        }
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        for r in 0..m.n_rows {
            if m.get(r, c).is_none() {
                out.set(r, c, mean);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputeConfig {
    /// Soft threshold subtracted from every singular value.
    pub sv_threshold: f64,
    pub max_iter: usize,
    /// Stop when `‖Z_new − Z‖²_F / ‖Z‖²_F` drops below this.
    pub tol: f64,
    /// Keep at most this many singular values per iterate (rank-restricted
    /// variant); `None` keeps all.
    pub max_rank: Option<usize>,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        ImputeConfig {
            sv_threshold: 1.0,
            max_iter: 200,
            tol: 1e-5,
            max_rank: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SoftImputeResult {
    pub matrix: FeatureMatrix,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterative SVD soft-thresholding. Observed cells of the output are copied
/// bit-for-bit from the input; the output mask is fully observed.
pub fn soft_impute(m: &FeatureMatrix, config: &ImputeConfig) -> Result<SoftImputeResult> {
    if m.n_rows == 0 || m.n_cols == 0 {
        return Err(Error::NoObservedEntries);
    }
    let rows_ok = (0..m.n_rows).all(|r| (0..m.n_cols).any(|c| m.get(r, c).is_some()));
    let cols_ok = (0..m.n_cols).all(|c| (0..m.n_rows).any(|r| m.get(r, c).is_some()));
    if !rows_ok || !cols_ok {
        return Err(Error::NoObservedEntries);
    }
    let init: Vec<f64> = (0..m.n_cols)
        .map(|c| {
            let o = m.observed(c);
            o.iter().sum::<f64>() / o.len() as f64
        })
        .collect();
    soft_impute_from(m, &init, config)
}

/// Soft-impute with caller-supplied starting values for missing cells;
/// columns may be entirely unobserved.
pub(crate) fn soft_impute_from(
    m: &FeatureMatrix,
    init: &[f64],
    config: &ImputeConfig,
) -> Result<SoftImputeResult> {
    if config.tol <= 0.0 || config.sv_threshold < 0.0 {
        return Err(Error::InvalidConfig(
            "soft impute needs tol > 0 and a nonnegative threshold".into(),
        ));
    }
    let (nr, nc) = (m.n_rows, m.n_cols);
    let mut z = DMatrix::from_fn(nr, nc, |r, c| m.get(r, c).unwrap_or(init[c]));
    let mut out = m.clone();
    if m.is_complete() {
        return Ok(SoftImputeResult {
            matrix: out,
            iterations: 0,
            converged: true,
        });
    }

    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        let svd = z.clone().svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let keep = config.max_rank.unwrap_or(order.len()).min(order.len());

        let mut x = DMatrix::<f64>::zeros(nr, nc);
        for &k in &order[..keep] {
            let s = (svd.singular_values[k] - config.sv_threshold).max(0.0);
            if s > 0.0 {
                x += s * u.column(k) * vt.row(k);
            }
        }

        let (mut change, mut norm) = (0.0, 0.0);
        for c in 0..nc {
            for r in 0..nr {
                let old = z[(r, c)];
                norm += old * old;
                if m.get(r, c).is_none() {
                    let new = x[(r, c)];
                    change += (new - old) * (new - old);
                    z[(r, c)] = new;
                }
            }
        }
        if change <= config.tol * norm.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    for r in 0..nr {
        for c in 0..nc {
            if m.get(r, c).is_none() {
                out.set(r, c, z[(r, c)]);
            }
        }
    }
    Ok(SoftImputeResult {
        matrix: out,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn matrix(rows: &[&[Option<f64>]]) -> FeatureMatrix {
        let nc = rows[0].len();
        let cols = (0..nc).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
        FeatureMatrix::from_columns((0..nc).map(|c| format!("c{c}")).collect(), cols).unwrap()
    }

    #[test]
    fn mean_impute_examples() {
        let m = matrix(&[&[Some(1.0)], &[None], &[Some(3.0)]]);
        let out = mean_impute(&m, &[0]).unwrap();
        assert_eq!(out.observed(0), vec![1.0, 2.0, 3.0]);
        assert!(out.is_complete());

        let full = matrix(&[&[Some(1.0)], &[Some(4.0)]]);
        assert_eq!(mean_impute(&full, &[0]).unwrap(), full);

        let none = matrix(&[&[None], &[None]]);
        assert!(matches!(mean_impute(&none, &[0]), Err(Error::AllMissingColumn(_))));
    }

    #[test]
    fn soft_impute_on_complete_matrix_is_identity() {
        let m = matrix(&[&[Some(1.0), Some(2.0)], &[Some(3.0), Some(4.0)]]);
        let r = soft_impute(&m, &ImputeConfig::default()).unwrap();
        assert_eq!(r.matrix, m);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn rank_one_completion() {
        let m = matrix(&[&[Some(1.0), Some(2.0)], &[Some(2.0), None]]);
        // Unrestricted soft-thresholding converges to the minimum nuclear-norm
        // completion, which is x = 1 (nuclear norm sqrt((1-x)^2 + 16) for x < 4).
        let plain = ImputeConfig {
            sv_threshold: 0.5,
            max_iter: 10_000,
            tol: 1e-16,
            max_rank: None,
        };
        let v = soft_impute(&m, &plain).unwrap().matrix.get(1, 1).unwrap();
        assert!((v - 1.0).abs() < 1e-3, "{v}");
        // Capping the rank at one recovers the rank-1 completion 2*2/1.
        let rank1 = ImputeConfig {
            sv_threshold: 1e-9,
            max_iter: 100_000,
            tol: 1e-18,
            max_rank: Some(1),
        };
        let v = soft_impute(&m, &rank1).unwrap().matrix.get(1, 1).unwrap();
        assert!((v - 4.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn empty_row_is_rejected() {
        let m = matrix(&[&[Some(1.0), Some(2.0)], &[None, None]]);
        assert!(matches!(
            soft_impute(&m, &ImputeConfig::default()),
            Err(Error::NoObservedEntries)
        ));
    }

    fn random_matrix(rng: &mut ChaCha8Rng, nr: usize, nc: usize) -> Vec<Vec<f64>> {
        (0..nr)
            .map(|_| (0..nc).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn uniform_missingness_is_mcar() {
        let mut mcar = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = random_matrix(&mut rng, 300, 5);
            let rows: Vec<Vec<Option<f64>>> = data
                .iter()
                .map(|row| {
                    let mut row: Vec<Option<f64>> = row.iter().map(|&v| Some(v)).collect();
                    if rng.gen::<f64>() < 0.15 {
                        row[0] = None;
                    }
                    row
                })
                .collect();
            let refs: Vec<&[Option<f64>]> = rows.iter().map(|r| r.as_slice()).collect();
            let classes = classify_missingness(&matrix(&refs));
            assert_eq!(classes.len(), 1);
            if classes["c0"] == Missingness::Mcar {
                mcar += 1;
            }
        }
        assert!(mcar as f64 / 40.0 >= 0.95, "{mcar}/40");
    }

    #[test]
    fn median_dependent_missingness_is_mar() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = random_matrix(&mut rng, 400, 2);
        let mut sorted: Vec<f64> = data.iter().map(|r| r[1]).collect();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[200];
        let rows: Vec<Vec<Option<f64>>> = data
            .iter()
            .map(|r| vec![(r[1] <= median).then_some(r[0]), Some(r[1])])
            .collect();
        let refs: Vec<&[Option<f64>]> = rows.iter().map(|r| r.as_slice()).collect();
        let m = matrix(&refs);
        let ind: Vec<bool> = (0..m.n_rows).map(|r| m.get(r, 0).is_none()).collect();
        let r = point_biserial(&ind, &m.observed(1)).unwrap();
        assert!(r > 0.5, "{r}");
        let classes = classify_missingness(&m);
        assert_eq!(classes["c0"], Missingness::Mar);
        assert!(!classes.contains_key("c1"));
    }

    #[test]
    fn low_rank_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (nr, nc) = (50, 20);
        let a = random_matrix(&mut rng, nr, 2);
        let b = random_matrix(&mut rng, 2, nc);
        let truth: Vec<Vec<f64>> = (0..nr)
            .map(|i| (0..nc).map(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j]).collect())
            .collect();
        let rows: Vec<Vec<Option<f64>>> = truth
            .iter()
            .map(|r| r.iter().map(|&v| (rng.gen::<f64>() >= 0.1).then_some(v)).collect())
            .collect();
        let refs: Vec<&[Option<f64>]> = rows.iter().map(|r| r.as_slice()).collect();
        let m = matrix(&refs);
        let cfg = ImputeConfig {
            sv_threshold: 0.1,
            max_iter: 5000,
            tol: 1e-10,
            max_rank: None,
        };
        let out = soft_impute(&m, &cfg).unwrap().matrix;
        let all: Vec<f64> = truth.iter().flatten().copied().collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let std = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt();
        let (mut se, mut n) = (0.0, 0);
        for r in 0..nr {
            for c in 0..nc {
                if rows[r][c].is_none() {
                    se += (out.get(r, c).unwrap() - truth[r][c]).powi(2);
                    n += 1;
                }
            }
        }
        let rmse = (se / n as f64).sqrt();
        assert!(rmse < 0.05 * std, "rmse {rmse} std {std}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn observed_cells_are_untouched(seed in 0u64..10_000, frac in 0.05f64..0.4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = random_matrix(&mut rng, 12, 6);
            let mut rows: Vec<Vec<Option<f64>>> = data
                .iter()
                .map(|r| r.iter().map(|&v| (rng.gen::<f64>() >= frac).then_some(v)).collect())
                .collect();
            // keep every row and column observable
            for (i, row) in rows.iter_mut().enumerate() {
                row[i % 6] = Some(data[i][i % 6]);
            }
            let refs: Vec<&[Option<f64>]> = rows.iter().map(|r| r.as_slice()).collect();
            let m = matrix(&refs);
            let out = soft_impute(&m, &ImputeConfig { sv_threshold: 0.3, ..Default::default() }).unwrap().matrix;
            for r in 0..m.n_rows {
                for c in 0..m.n_cols {
                    if let Some(v) = m.get(r, c) {
                        proptest::prop_assert_eq!(out.get(r, c).unwrap().to_bits(), v.to_bits());
                    }
                }
            }
        }
    }
}
