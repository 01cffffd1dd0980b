use std::collections::BTreeMap;

use serde::Serialize;

use super::Module;
use crate::error::{Error, Result};

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const GRAD_EPS: f64 = 1e-5;

/// Largest per-scalar relative error for each trainable slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub errors: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.errors.values().copied().fold(0.0, f64::max)
    }

    /// Folds another report in; the combined report passes only if both do.
    pub fn merge(&mut self, other: GradCheckReport, prefix: &str) {
        for (k, v) in other.errors {
            let e = self.errors.entry(format!("{prefix}{k}")).or_insert(0.0);
            *e = e.max(v);
        }
        self.pass &= other.pass;
    }
}

/// Central differences at `ε = 1e-5` carry about `1e-11` of round-off for
/// an O(1) loss, so nonzero gradient entries smaller than this cannot be
/// checked to `1e-4` relative error.
pub const FD_RESOLUTION: f64 = 1e-6;

/// Smallest nonzero `|grad|` over trainable slots, or infinity.
pub fn smallest_nonzero_gradient<M: Module + ?Sized>(model: &M) -> f64 {
    let mut m = f64::INFINITY;
    model.visit("", &mut |_, p| {
        if p.trainable {
            for &g in &p.grad.data {
                if g != 0.0 {
                    m = m.min(g.abs());
                }
            }
        }
    });
    m
}

/// True when nudging any single trainable scalar by `±eps` leaves
/// `signature` (e.g. the sign pattern of every ReLU input) unchanged, so the
/// difference stencil never straddles a kink.
pub fn stencil_is_smooth<M: Module + ?Sized, S: PartialEq>(
    model: &mut M,
    eps: f64,
    signature: impl Fn(&M) -> Result<S>,
) -> Result<bool> {
    let base = signature(model)?;
    let mut sizes = Vec::new();
    model.visit("", &mut |_, p| {
        if p.trainable {
            sizes.push(p.len());
        }
    });
    for (slot, &n) in sizes.iter().enumerate() {
        for k in 0..n {
            let mut orig = 0.0;
            for delta in [eps, -eps] {
                with_scalar(model, slot, k, |v| {
                    orig = *v;
                    *v = orig + delta;
                });
                let s = signature(model);
                with_scalar(model, slot, k, |v| *v = orig);
                if s? != base {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn with_scalar<M: Module + ?Sized>(model: &mut M, slot: usize, k: usize, f: impl FnOnce(&mut f64)) {
    let mut idx = 0;
    let mut f = Some(f);
    model.visit_mut("", &mut |_, p| {
        if p.trainable {
            if idx == slot {
                if let Some(f) = f.take() {
                    f(&mut p.value.data[k]);
                }
            }
            idx += 1;
        }
    });
}

/// Compares analytic gradients against central differences for every
/// trainable scalar.
///
/// `loss` evaluates the objective without touching gradients;
/// `loss_and_grad` evaluates it and accumulates gradients into the (zeroed)
/// model. Both must be deterministic, so any dropout must use a fixed seed.
pub fn grad_check<M: Module>(
    model: &mut M,
    eps: f64,
    tolerance: f64,
    loss: impl Fn(&M) -> Result<f64>,
    mut loss_and_grad: impl FnMut(&mut M) -> Result<f64>,
) -> Result<GradCheckReport> {
    model.zero_grad();
    let l0 = loss_and_grad(model)?;
    if !l0.is_finite() {
        return Err(Error::NonFiniteLoss(format!("{l0} at the check point")));
    }
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    model.visit("", &mut |name, p| {
        if p.trainable {
            analytic.push((name.to_string(), p.grad.data.clone()));
        }
    });

    let mut errors = BTreeMap::new();
    for (slot, (name, grads)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (k, &a) in grads.iter().enumerate() {
            let mut orig = 0.0;
            with_scalar(model, slot, k, |v| {
                orig = *v;
                *v = orig + eps;
            });
            let lp = loss(model)?;
            with_scalar(model, slot, k, |v| *v = orig - eps);
            let lm = loss(model)?;
            with_scalar(model, slot, k, |v| *v = orig);
            if !lp.is_finite() || !lm.is_finite() {
                return Err(Error::NonFiniteLoss(format!("perturbing {name}[{k}]")));
            }
            let n = (lp - lm) / (2.0 * eps);
            worst = worst.max(relative_error(a, n));
        }
        errors.insert(name.clone(), worst);
    }
    let pass = errors.values().all(|&e| e < tolerance);
    Ok(GradCheckReport { errors, tolerance, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{random_tensor, Linear, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Linear, Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = Linear::new(4, 3, &mut rng);
        let x = random_tensor(&[6, 4], &mut rng);
        let w = random_tensor(&[6, 3], &mut rng);
        (l, x, w)
    }

    fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn linear_model_is_essentially_exact() {
        let (mut l, x, w) = setup();
        let r = grad_check(&mut l, GRAD_EPS, GRAD_TOLERANCE, |l: &Linear| Ok(dot(&l.forward(&x)?, &w)), |l: &mut Linear| {
            let y = l.forward(&x)?;
            l.backward(&x, &w);
            Ok(dot(&y, &w))
        })
        .unwrap();
        assert!(r.pass);
        assert!(r.max_error() < 1e-7, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let (mut l, x, w) = setup();
        let r = grad_check(&mut l, GRAD_EPS, GRAD_TOLERANCE, |l: &Linear| Ok(dot(&l.forward(&x)?, &w)), |l: &mut Linear| {
            let y = l.forward(&x)?;
            l.backward(&x, &w);
            l.weight.grad.data.iter_mut().for_each(|g| *g *= 1.01);
            Ok(dot(&y, &w))
        })
        .unwrap();
        assert!(!r.pass);
        assert!(r.errors["weight"] > 1e-3);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let (mut l, _, _) = setup();
        let r = grad_check(&mut l, GRAD_EPS, GRAD_TOLERANCE, |_: &Linear| Ok(f64::NAN), |_: &mut Linear| Ok(f64::NAN));
        assert!(matches!(r, Err(Error::NonFiniteLoss(_))));
    }

    #[test]
    fn smallest_gradient() {
        let (mut l, _, _) = setup();
        assert_eq!(smallest_nonzero_gradient(&l), f64::INFINITY);
        l.weight.grad.data[3] = -2e-9;
        l.bias.grad.data[0] = 5.0;
        assert_eq!(smallest_nonzero_gradient(&l), 2e-9);
    }

    #[test]
    fn stencil_detects_a_kink() {
        let (mut l, x, _) = setup();
        let relu_pattern = |l: &Linear| -> Result<Vec<bool>> { Ok(l.forward(&x)?.data.iter().map(|&v| v > 0.0).collect()) };
        assert!(stencil_is_smooth(&mut l, 1e-5, relu_pattern).unwrap());
        // put one pre-activation exactly on the kink
        let z = l.forward(&x).unwrap().data[0];
        l.bias.value.data[0] -= z;
        assert!(!stencil_is_smooth(&mut l, 1e-5, relu_pattern).unwrap());
        let before = l.clone();
        stencil_is_smooth(&mut l, 1e-5, relu_pattern).unwrap();
        assert_eq!(l, before);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-12, 0.0) - 1e-4).abs() < 1e-15);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
    }
}
