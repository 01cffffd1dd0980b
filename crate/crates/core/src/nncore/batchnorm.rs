use serde::{Deserialize, Serialize};

use super::param::join;
use super::{Module, Param, Tensor};
use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.1;
/// Small enough that a unit-scale batch normalises to variance 1 within 1e-6.
pub const BN_EPS: f64 = 1e-7;

/// Per-feature batch normalisation over a `[batch, features]` input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
}

/// Saved by a training-mode forward for the backward pass and the running
/// statistics update.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    /// Unbiased batch variance, folded into the running estimate.
    pub var_unbiased: Vec<f64>,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            gamma: Param::new(Tensor::filled(&[features], 1.0)),
            beta: Param::zeros(&[features]),
            running_mean: Param::buffer(Tensor::zeros(&[features])),
            running_var: Param::buffer(Tensor::filled(&[features], 1.0)),
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.features() {
            return Err(Error::ShapeMismatch(format!(
                "batch norm expects {} features, got {}",
                self.features(),
                x.cols()
            )));
        }
        Ok(())
    }

    /// Normalises with batch statistics. Running statistics are left alone;
    /// see [`BatchNorm::commit`].
    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, BnCache)> {
        self.check(x)?;
        let (b, f) = (x.rows(), self.features());
        if b < 2 {
            return Err(Error::BatchTooSmall(b));
        }
        let mut mean = vec![0.0; f];
        for row in x.data.chunks(f) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= b as f64);
        let mut var = vec![0.0; f];
        for row in x.data.chunks(f) {
            for j in 0..f {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        let var_unbiased: Vec<f64> = var.iter().map(|v| v / (b - 1) as f64).collect();
        var.iter_mut().for_each(|v| *v /= b as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

        let mut xhat = Tensor::zeros(&[b, f]);
        let mut y = Tensor::zeros(&[b, f]);
        let (g, be) = (&self.gamma.value.data, &self.beta.value.data);
        for r in 0..b {
            for j in 0..f {
                let h = (x.data[r * f + j] - mean[j]) * inv_std[j];
                xhat.data[r * f + j] = h;
                y.data[r * f + j] = g[j] * h + be[j];
            }
        }
        Ok((y, BnCache { xhat, inv_std, mean, var_unbiased }))
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let f = self.features();
        let mut y = x.clone();
        let (g, be) = (&self.gamma.value.data, &self.beta.value.data);
        let (rm, rv) = (&self.running_mean.value.data, &self.running_var.value.data);
        for row in y.data.chunks_mut(f) {
            for j in 0..f {
                row[j] = g[j] * (row[j] - rm[j]) / (rv[j] + BN_EPS).sqrt() + be[j];
            }
        }
        Ok(y)
    }

    /// Folds the batch statistics into the running estimates. `offset` is
    /// added to the batch mean when the input was computed without a bias
    /// that the eval path will include.
    pub fn commit(&mut self, cache: &BnCache, offset: Option<&[f64]>) {
        let rm = &mut self.running_mean.value.data;
        let rv = &mut self.running_var.value.data;
        for j in 0..rm.len() {
            let m = cache.mean[j] + offset.map_or(0.0, |o| o[j]);
            rm[j] = (1.0 - BN_MOMENTUM) * rm[j] + BN_MOMENTUM * m;
            rv[j] = (1.0 - BN_MOMENTUM) * rv[j] + BN_MOMENTUM * cache.var_unbiased[j];
        }
    }

    /// Accumulates `γ`, `β` gradients and returns `∂L/∂x`.
    pub fn backward(&mut self, cache: &BnCache, dy: &Tensor) -> Tensor {
        let (b, f) = (dy.rows(), self.features());
        let bf = b as f64;
        let g = &self.gamma.value.data;
        let mut sum_dxhat = vec![0.0; f];
        let mut sum_dxhat_xhat = vec![0.0; f];
        for r in 0..b {
            for j in 0..f {
                let d = dy.data[r * f + j];
                let h = cache.xhat.data[r * f + j];
                self.gamma.grad.data[j] += d * h;
                self.beta.grad.data[j] += d;
                let dh = d * g[j];
                sum_dxhat[j] += dh;
                sum_dxhat_xhat[j] += dh * h;
            }
        }
        let mut dx = Tensor::zeros(&[b, f]);
        for r in 0..b {
            for j in 0..f {
                let h = cache.xhat.data[r * f + j];
                let dh = dy.data[r * f + j] * g[j];
                dx.data[r * f + j] =
                    cache.inv_std[j] / bf * (bf * dh - sum_dxhat[j] - h * sum_dxhat_xhat[j]);
            }
        }
        dx
    }
}

impl Module for BatchNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck::{grad_check, GRAD_TOLERANCE};
    use crate::nncore::random_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_count_is_twice_features() {
        assert_eq!(BatchNorm::new(32).param_count(), 64);
        assert_eq!(BatchNorm::new(16).param_count(), 32);
    }

    #[test]
    fn training_output_is_normalised() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor(&[64, 5], &mut rng);
        let (y, _) = BatchNorm::new(5).forward_train(&x).unwrap();
        for j in 0..5 {
            let col: Vec<f64> = (0..64).map(|r| y.data[r * 5 + j]).collect();
            let m = col.iter().sum::<f64>() / 64.0;
            let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / 64.0;
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-6, "var {v}");
        }
    }

    #[test]
    fn training_variance_matches_definition() {
        // with eps folded in, var(y) = var / (var + eps)
        let x = Tensor::from_vec(&[4, 1], vec![0.0, 10.0, 20.0, 30.0]).unwrap();
        let (y, _) = BatchNorm::new(1).forward_train(&x).unwrap();
        let v = y.data.iter().map(|c| c * c).sum::<f64>() / 4.0;
        assert!((v - 125.0 / (125.0 + BN_EPS)).abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-6);
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let bn = BatchNorm::new(3);
        assert!(matches!(bn.forward_train(&Tensor::zeros(&[1, 3])), Err(Error::BatchTooSmall(1))));
    }

    #[test]
    fn eval_is_pure_and_commit_updates_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut bn = BatchNorm::new(3);
        let x = random_tensor(&[10, 3], &mut rng);
        let a = bn.forward_eval(&x).unwrap();
        assert_eq!(a, bn.forward_eval(&x).unwrap());
        let (_, cache) = bn.forward_train(&x).unwrap();
        bn.commit(&cache, None);
        for j in 0..3 {
            assert!((bn.running_mean.value.data[j] - 0.1 * cache.mean[j]).abs() < 1e-15);
            assert!((bn.running_var.value.data[j] - (0.9 + 0.1 * cache.var_unbiased[j])).abs() < 1e-15);
        }
    }

    #[test]
    fn finite_difference() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut bn = BatchNorm::new(3);
            for v in bn.gamma.value.data.iter_mut().chain(bn.beta.value.data.iter_mut()) {
                *v = rand::Rng::gen_range(&mut rng, -1.5..1.5);
            }
            let x = random_tensor(&[6, 3], &mut rng);
            let w = random_tensor(&[6, 3], &mut rng);
            let loss = |bn: &BatchNorm| -> Result<f64> {
                let (y, _) = bn.forward_train(&x)?;
                Ok(y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum())
            };
            let report = grad_check(&mut bn, 1e-5, GRAD_TOLERANCE, loss, |bn: &mut BatchNorm| {
                let (y, cache) = bn.forward_train(&x)?;
                bn.backward(&cache, &w);
                Ok(y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum())
            })
            .unwrap();
            assert!(report.pass, "seed {seed}: {report:?}");
        }
    }
}
