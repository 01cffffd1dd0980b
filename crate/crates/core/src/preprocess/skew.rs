//! Skewness measurement and the skew-reducing power transforms.

use serde::{Deserialize, Serialize};

use crate::dataset::SKEW_THRESHOLD;
use crate::error::{Error, Result};

/// Offset that keeps shifted values strictly positive.
pub const SHIFT_EPS: f64 = 1e-6;

/// A Box-Cox candidate must beat the best fixed transform by at least this
/// much |skewness|, or by two standard errors of the skewness estimate when
/// that is larger, before the fitted parameter is worth it.
pub const BOXCOX_PARSIMONY: f64 = 0.05;

/// Large-sample standard error of g1 under normality.
pub fn skewness_std_error(n: usize) -> f64 {
    (6.0 / n as f64).sqrt()
}

const LAMBDA_RANGE: (f64, f64) = (-5.0, 5.0);
const LAMBDA_TOL: f64 = 1e-4;

/// Fisher–Pearson skewness `m3 / m2^{3/2}` with population moments.
pub fn skewness(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 3 {
        return Err(Error::TooFewValues { needed: 3, got: n });
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3) = (0.0, 0.0);
    for &x in values {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= nf;
    m3 /= nf;
    let scale = values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m2 <= (1e-12 * scale).powi(2) || m2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(m3 / m2.powf(1.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformKind {
    None,
    Log,
    BoxCox,
    Sqrt,
}

/// A fitted per-column power transform applied as `f(x + shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub lambda: Option<f64>,
    pub shift: f64,
}

impl TransformSpec {
    pub const IDENTITY: TransformSpec = TransformSpec {
        kind: TransformKind::None,
        lambda: None,
        shift: 0.0,
    };

    /// Values outside the fitted domain are clamped to `SHIFT_EPS` after the
    /// shift, so unseen data never produces NaN.
    pub fn apply(&self, x: f64) -> f64 {
        let y = (x + self.shift).max(SHIFT_EPS);
        match self.kind {
            TransformKind::None => x,
            TransformKind::Log => y.ln(),
            TransformKind::Sqrt => (x + self.shift).max(0.0).sqrt(),
            TransformKind::BoxCox => boxcox_unchecked(y, self.lambda.unwrap_or(1.0)),
        }
    }
}

/// `(x^λ − 1)/λ`, or `ln x` at `λ = 0`.
pub fn boxcox(x: f64, lambda: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::NonPositiveInput(x));
    }
    Ok(boxcox_unchecked(x, lambda))
}

fn boxcox_unchecked(x: f64, lambda: f64) -> f64 {
    let lx = x.ln();
    if lambda == 0.0 {
        lx
    } else {
        (lambda * lx).exp_m1() / lambda
    }
}

/// Box-Cox profile log-likelihood, up to a constant.
fn boxcox_llf(values: &[f64], sum_ln: f64, lambda: f64) -> f64 {
    let n = values.len() as f64;
    let y: Vec<f64> = values.iter().map(|&x| boxcox_unchecked(x, lambda)).collect();
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var.is_finite() && var > 0.0) {
        return f64::NEG_INFINITY;
    }
    -0.5 * n * var.ln() + (lambda - 1.0) * sum_ln
}

/// Maximum-likelihood Box-Cox λ by golden-section search over [−5, 5].
pub fn boxcox_mle(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: values.len(),
        });
    }
    if let Some(&bad) = values.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::NonPositiveInput(bad));
    }
    let sum_ln: f64 = values.iter().map(|x| x.ln()).sum();
    let f = |l: f64| boxcox_llf(values, sum_ln, l);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = LAMBDA_RANGE;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > LAMBDA_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    Ok(0.5 * (a + b))
}

fn abs_skew_of(values: &[f64], spec: &TransformSpec) -> Option<f64> {
    let t: Vec<f64> = values.iter().map(|&x| spec.apply(x)).collect();
    skewness(&t).ok().map(f64::abs)
}

/// Picks the transform that minimises |skewness| of the observed values.
///
/// Columns already within the skew threshold keep the identity. Box-Cox only
/// wins over Log/Sqrt when it is better by more than [`BOXCOX_PARSIMONY`].
pub fn select_transform(values: &[f64]) -> Result<TransformSpec> {
    let base = match skewness(values) {
        Ok(g) => g.abs(),
        Err(Error::ZeroVariance) => return Ok(TransformSpec::IDENTITY),
        Err(e) => return Err(e),
    };
    if base <= SKEW_THRESHOLD {
        return Ok(TransformSpec::IDENTITY);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = (SHIFT_EPS - min).max(0.0);
    let shifted: Vec<f64> = values.iter().map(|x| x + shift).collect();

    let mut fixed: Vec<(TransformSpec, f64)> = Vec::new();
    for kind in [TransformKind::Log, TransformKind::Sqrt] {
        let spec = TransformSpec { kind, lambda: None, shift };
        if let Some(s) = abs_skew_of(values, &spec) {
            fixed.push((spec, s));
        }
    }
    let best_fixed = fixed
        .into_iter()
        .filter(|(_, s)| *s < base)
        .min_by(|a, b| a.1.total_cmp(&b.1));

    let boxcox = boxcox_mle(&shifted).ok().and_then(|lambda| {
        let spec = TransformSpec {
            kind: TransformKind::BoxCox,
            lambda: Some(lambda),
            shift,
        };
        abs_skew_of(values, &spec).map(|s| (spec, s))
    });

    let margin = BOXCOX_PARSIMONY.max(2.0 * skewness_std_error(values.len()));
    let chosen = match (best_fixed, boxcox) {
        (Some(f), Some(b)) if b.1 + margin < f.1 => Some(b),
        (Some(f), _) => Some(f),
        (None, Some(b)) if b.1 < base => Some(b),
        _ => None,
    };
    Ok(chosen.map(|c| c.0).unwrap_or(TransformSpec::IDENTITY))
}
