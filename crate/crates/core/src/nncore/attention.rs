use rand::Rng;
use serde::{Deserialize, Serialize};

use super::param::join;
use super::{Module, Param, Tensor};
use crate::error::{Error, Result};

/// Additive attention pooling over time:
/// `s_t = vᵀ tanh(W h_t + b_W) + b_v`, `α = softmax(s)`, `c = Σ α_t h_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    pub w: Param,
    pub b_w: Param,
    pub v: Param,
    pub b_v: Param,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    h: Tensor,
    /// `tanh(W h_t + b_W)`, `[B, T, d]`.
    u: Vec<f64>,
    /// `[B, T]`
    pub alpha: Vec<f64>,
}

impl Attention {
    pub fn new(width: usize, rng: &mut impl Rng) -> Self {
        Attention {
            w: Param::uniform(&[width, width], width, rng),
            b_w: Param::zeros(&[width]),
            v: Param::uniform(&[width], width, rng),
            b_v: Param::zeros(&[1]),
        }
    }

    pub fn width(&self) -> usize {
        self.b_w.len()
    }

    /// `h: [B, T, d]` → `[B, d]`.
    pub fn forward(&self, h: &Tensor) -> Result<(Tensor, AttentionCache)> {
        let d = self.width();
        if h.shape.len() != 3 || h.shape[2] != d || h.shape[1] == 0 {
            return Err(Error::ShapeMismatch(format!(
                "attention expects [batch, time>0, {d}], got {:?}",
                h.shape
            )));
        }
        let (b, tn) = (h.shape[0], h.shape[1]);
        let w = &self.w.value.data;
        let mut u = vec![0.0; b * tn * d];
        let mut alpha = vec![0.0; b * tn];
        let mut ctx = Tensor::zeros(&[b, d]);
        for r in 0..b {
            let mut scores = vec![0.0; tn];
            for t in 0..tn {
                let ht = &h.data[(r * tn + t) * d..(r * tn + t + 1) * d];
                let ut = &mut u[(r * tn + t) * d..(r * tn + t + 1) * d];
                for j in 0..d {
                    let z: f64 = w[j * d..(j + 1) * d].iter().zip(ht).map(|(a, x)| a * x).sum();
                    ut[j] = (z + self.b_w.value.data[j]).tanh();
                }
                // b_v shifts every score equally and cancels in the softmax,
                // so it is left out of the computation.
                scores[t] = ut.iter().zip(&self.v.value.data).map(|(a, v)| a * v).sum();
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for t in 0..tn {
                let a = exps[t] / z;
                alpha[r * tn + t] = a;
                let ht = &h.data[(r * tn + t) * d..(r * tn + t + 1) * d];
                ctx.data[r * d..(r + 1) * d].iter_mut().zip(ht).for_each(|(c, x)| *c += a * x);
            }
        }
        Ok((ctx, AttentionCache { h: h.clone(), u, alpha }))
    }

    /// Accumulates parameter gradients and returns `∂L/∂h`.
    pub fn backward(&mut self, cache: &AttentionCache, dctx: &Tensor) -> Tensor {
        let h = &cache.h;
        let (b, tn, d) = (h.shape[0], h.shape[1], self.width());
        let mut dh = Tensor::zeros(&[b, tn, d]);
        for r in 0..b {
            let dc = &dctx.data[r * d..(r + 1) * d];
            let alpha = &cache.alpha[r * tn..(r + 1) * tn];
            let dalpha: Vec<f64> = (0..tn)
                .map(|t| {
                    let ht = &h.data[(r * tn + t) * d..(r * tn + t + 1) * d];
                    ht.iter().zip(dc).map(|(x, g)| x * g).sum()
                })
                .collect();
            let mean: f64 = alpha.iter().zip(&dalpha).map(|(a, g)| a * g).sum();
            for t in 0..tn {
                let ds = alpha[t] * (dalpha[t] - mean);
                let base = (r * tn + t) * d;
                let ht = &h.data[base..base + d];
                let ut = &cache.u[base..base + d];
                let dht = &mut dh.data[base..base + d];
                dht.iter_mut().zip(dc).for_each(|(o, g)| *o += alpha[t] * g);
                for j in 0..d {
                    self.v.grad.data[j] += ds * ut[j];
                    let dz = ds * self.v.value.data[j] * (1.0 - ut[j] * ut[j]);
                    if dz == 0.0 {
                        continue;
                    }
                    self.b_w.grad.data[j] += dz;
                    let wrow = &self.w.value.data[j * d..(j + 1) * d];
                    let grow = &mut self.w.grad.data[j * d..(j + 1) * d];
                    for k in 0..d {
                        grow[k] += dz * ht[k];
                        dht[k] += dz * wrow[k];
                    }
                }
            }
        }
        dh
    }
}

impl Module for Attention {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "w"), &self.w);
        f(&join(prefix, "b_w"), &self.b_w);
        f(&join(prefix, "v"), &self.v);
        f(&join(prefix, "b_v"), &self.b_v);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "w"), &mut self.w);
        f(&join(prefix, "b_w"), &mut self.b_w);
        f(&join(prefix, "v"), &mut self.v);
        f(&join(prefix, "b_v"), &mut self.b_v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck::grad_check;
    use crate::nncore::random_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_count_at_128() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(Attention::new(128, &mut rng).param_count(), 16_641);
    }

    #[test]
    fn single_step_returns_the_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Attention::new(4, &mut rng);
        let h = random_tensor(&[3, 1, 4], &mut rng);
        let (c, cache) = a.forward(&h).unwrap();
        assert!(cache.alpha.iter().all(|&x| x == 1.0));
        assert_eq!(c.data, h.data);
    }

    #[test]
    fn weights_form_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Attention::new(5, &mut rng);
        let h = random_tensor(&[4, 7, 5], &mut rng);
        let (_, cache) = a.forward(&h).unwrap();
        for row in cache.alpha.chunks(7) {
            assert!(row.iter().all(|&x| x >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_differences() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a = Attention::new(4, &mut rng);
            let h = random_tensor(&[3, 5, 4], &mut rng);
            let w = random_tensor(&[3, 4], &mut rng);
            let f = |y: &Tensor| -> f64 { y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum() };
            let report = grad_check(
                &mut a,
                1e-5,
                1e-5,
                |a: &Attention| Ok(f(&a.forward(&h)?.0)),
                |a: &mut Attention| {
                    let (y, c) = a.forward(&h)?;
                    a.backward(&c, &w);
                    Ok(f(&y))
                },
            )
            .unwrap();
            assert!(report.pass, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut a = Attention::new(3, &mut rng);
        let h = random_tensor(&[2, 4, 3], &mut rng);
        let w = random_tensor(&[2, 3], &mut rng);
        let f = |y: &Tensor| -> f64 { y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum() };
        let (_, c) = a.forward(&h).unwrap();
        let dh = a.backward(&c, &w);
        for k in 0..h.len() {
            let mut hp = h.clone();
            hp.data[k] += 1e-5;
            let mut hm = h.clone();
            hm.data[k] -= 1e-5;
            let n = (f(&a.forward(&hp).unwrap().0) - f(&a.forward(&hm).unwrap().0)) / 2e-5;
            let rel = (n - dh.data[k]).abs() / n.abs().max(dh.data[k].abs()).max(1e-8);
            assert!(rel < 1e-5, "{k}: {n} vs {}", dh.data[k]);
        }
    }
}
