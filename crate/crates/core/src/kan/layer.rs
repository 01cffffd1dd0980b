use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bspline::{BSplineConfig, SparseBasis};
use crate::error::{Error, Result};
use crate::nncore::param::join;
use crate::nncore::tensor::{silu, silu_grad};
use crate::nncore::{Module, Param, Tensor};

/// One Kolmogorov-Arnold layer. Edge `(j, i)` computes
/// `base[j][i]·silu(x_i) + scaler[j][i]·Σ_c coeffs[j][i][c]·B_c(x_i)`
/// and output `j` sums its edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub config: BSplineConfig,
    /// `[out, in, G + k]`
    pub coeffs: Param,
    /// `[out, in]`
    pub base_weight: Param,
    /// `[out, in]`
    pub spline_scaler: Param,
}

#[derive(Debug, Clone)]
pub struct KanLayerCache {
    x: Tensor,
    /// Per `(row, input)`.
    basis: Vec<SparseBasis>,
}

impl KanLayer {
    pub fn new(in_dim: usize, out_dim: usize, config: BSplineConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidWidths(format!("{in_dim} -> {out_dim}")));
        }
        let nb = config.n_basis();
        let normal = Normal::new(0.0, 0.1 / (nb as f64).sqrt()).expect("positive std");
        let mut coeffs = Tensor::zeros(&[out_dim, in_dim, nb]);
        coeffs.data.iter_mut().for_each(|v| *v = normal.sample(rng));
        Ok(KanLayer {
            in_dim,
            out_dim,
            config,
            coeffs: Param::new(coeffs),
            base_weight: Param::uniform(&[out_dim, in_dim], in_dim, rng),
            spline_scaler: Param::new(Tensor::filled(&[out_dim, in_dim], 1.0)),
        })
    }

    /// `in·out·(G + k + 2)`.
    pub fn param_count_formula(in_dim: usize, out_dim: usize, config: &BSplineConfig) -> usize {
        in_dim * out_dim * (config.n_basis() + 2)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, KanLayerCache)> {
        if x.cols() != self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "kan layer expects {} inputs, got {}",
                self.in_dim,
                x.cols()
            )));
        }
        let (b, ni, no) = (x.rows(), self.in_dim, self.out_dim);
        let k1 = self.config.spline_order + 1;
        let nb = self.config.n_basis();
        let basis: Vec<SparseBasis> = x.data.iter().map(|&v| self.config.sparse(v)).collect();
        let act: Vec<f64> = x.data.iter().map(|&v| silu(v)).collect();
        let (coef, base, scale) = (&self.coeffs.value.data, &self.base_weight.value.data, &self.spline_scaler.value.data);
        let mut y = Tensor::zeros(&[b, no]);
        for r in 0..b {
            for j in 0..no {
                let mut acc = 0.0;
                for i in 0..ni {
                    let s = &basis[r * ni + i];
                    let c = &coef[(j * ni + i) * nb + s.start..(j * ni + i) * nb + s.start + k1];
                    let spline: f64 = c.iter().zip(&s.values[..k1]).map(|(a, v)| a * v).sum();
                    acc += base[j * ni + i] * act[r * ni + i] + scale[j * ni + i] * spline;
                }
                y.data[r * no + j] = acc;
            }
        }
        Ok((y, KanLayerCache { x: x.clone(), basis }))
    }

    /// Smallest [`BSplineConfig::knot_distance`] over the inputs of a pass.
    pub fn knot_margin(&self, cache: &KanLayerCache) -> f64 {
        cache.x.data.iter().map(|&v| self.config.knot_distance(v)).fold(f64::INFINITY, f64::min)
    }

    /// Accumulates parameter gradients and returns `∂L/∂x`.
    pub fn backward(&mut self, cache: &KanLayerCache, dy: &Tensor) -> Tensor {
        let (b, ni, no) = (cache.x.rows(), self.in_dim, self.out_dim);
        let k1 = self.config.spline_order + 1;
        let nb = self.config.n_basis();
        let mut dx = Tensor::zeros(&[b, ni]);
        let coef = &self.coeffs.value.data;
        let base = &self.base_weight.value.data;
        let scale = &self.spline_scaler.value.data;
        let gc = &mut self.coeffs.grad.data;
        let gb = &mut self.base_weight.grad.data;
        let gs = &mut self.spline_scaler.grad.data;
        for r in 0..b {
            for i in 0..ni {
                let s = &cache.basis[r * ni + i];
                let xv = cache.x.data[r * ni + i];
                let (a, da) = (silu(xv), silu_grad(xv));
                let mut dxi = 0.0;
                for j in 0..no {
                    let g = dy.data[r * no + j];
                    if g == 0.0 {
                        continue;
                    }
                    let e = j * ni + i;
                    let off = e * nb + s.start;
                    let c = &coef[off..off + k1];
                    let spline: f64 = c.iter().zip(&s.values[..k1]).map(|(a, v)| a * v).sum();
                    let dspline: f64 = c.iter().zip(&s.derivs[..k1]).map(|(a, v)| a * v).sum();
                    gb[e] += g * a;
                    gs[e] += g * spline;
                    let gsc = g * scale[e];
                    for (t, v) in gc[off..off + k1].iter_mut().zip(&s.values[..k1]) {
                        *t += gsc * v;
                    }
                    dxi += g * (base[e] * da + scale[e] * dspline);
                }
                dx.data[r * ni + i] = dxi;
            }
        }
        dx
    }
}

impl Module for KanLayer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "coeffs"), &self.coeffs);
        f(&join(prefix, "base_weight"), &self.base_weight);
        f(&join(prefix, "spline_scaler"), &self.spline_scaler);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "coeffs"), &mut self.coeffs);
        f(&join(prefix, "base_weight"), &mut self.base_weight);
        f(&join(prefix, "spline_scaler"), &mut self.spline_scaler);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kan::{bspline_basis, knot_avoiding_tensor};
    use crate::nncore::{grad_check, random_tensor, GRAD_TOLERANCE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(ni: usize, no: usize, g: usize, seed: u64) -> KanLayer {
        let cfg = BSplineConfig { grid_size: g, ..Default::default() };
        KanLayer::new(ni, no, cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut l = layer(3, 2, 5, 0);
        l.visit_mut("", &mut |_, p| p.value.fill(0.0));
        let x = random_tensor(&[4, 3], &mut ChaCha8Rng::seed_from_u64(1));
        assert!(l.forward(&x).unwrap().0.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_spline_sums_to_input_width() {
        let mut l = layer(5, 3, 10, 0);
        l.base_weight.value.fill(0.0);
        l.coeffs.value.fill(1.0);
        l.spline_scaler.value.fill(1.0);
        let x = random_tensor(&[4, 5], &mut ChaCha8Rng::seed_from_u64(2));
        let (y, _) = l.forward(&x).unwrap();
        assert!(y.data.iter().all(|&v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn spline_off_reduces_to_silu_sum() {
        let mut l = layer(4, 3, 6, 3);
        l.spline_scaler.value.fill(0.0);
        let x = random_tensor(&[5, 4], &mut ChaCha8Rng::seed_from_u64(4));
        let (y, _) = l.forward(&x).unwrap();
        for r in 0..5 {
            for j in 0..3 {
                let direct: f64 = (0..4)
                    .map(|i| {
                        let v = x.data[r * 4 + i];
                        l.base_weight.value.data[j * 4 + i] * v / (1.0 + (-v).exp())
                    })
                    .sum();
                assert!((y.data[r * 3 + j] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_reference_forward() {
        let l = layer(3, 2, 5, 5);
        let x = random_tensor(&[3, 3], &mut ChaCha8Rng::seed_from_u64(6));
        let (y, _) = l.forward(&x).unwrap();
        let nb = l.config.n_basis();
        for r in 0..3 {
            for j in 0..2 {
                let mut e = 0.0;
                for i in 0..3 {
                    let v = x.data[r * 3 + i];
                    let basis = bspline_basis(v, &l.config);
                    let edge = j * 3 + i;
                    let spline: f64 = (0..nb).map(|c| l.coeffs.value.data[edge * nb + c] * basis[c]).sum();
                    e += l.base_weight.value.data[edge] * v / (1.0 + (-v).exp())
                        + l.spline_scaler.value.data[edge] * spline;
                }
                assert!((y.data[r * 2 + j] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parameter_count() {
        let cfg = BSplineConfig::default();
        let l = KanLayer::new(27, 45, cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(l.param_count(), 27 * 45 * 15);
        assert_eq!(KanLayer::param_count_formula(27, 45, &cfg), 18_225);
    }

    #[test]
    fn finite_differences() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut l = layer(3, 2, 5, seed);
            let x = knot_avoiding_tensor(&[4, 3], &l.config, 0.1, &mut rng);
            let w = random_tensor(&[4, 2], &mut rng);
            let f = |y: &Tensor| -> f64 { y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum() };
            let report = grad_check(
                &mut l,
                1e-5,
                GRAD_TOLERANCE,
                |l: &KanLayer| Ok(f(&l.forward(&x)?.0)),
                |l: &mut KanLayer| {
                    let (y, c) = l.forward(&x)?;
                    l.backward(&c, &w);
                    Ok(f(&y))
                },
            )
            .unwrap();
            assert!(report.pass, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn input_gradient() {
        let mut l = layer(3, 2, 5, 9);
        let x = random_tensor(&[2, 3], &mut ChaCha8Rng::seed_from_u64(10));
        let w = random_tensor(&[2, 2], &mut ChaCha8Rng::seed_from_u64(11));
        let f = |y: &Tensor| -> f64 { y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum() };
        let (_, c) = l.forward(&x).unwrap();
        let dx = l.backward(&c, &w);
        for k in 0..x.len() {
            let mut xp = x.clone();
            xp.data[k] += 1e-5;
            let mut xm = x.clone();
            xm.data[k] -= 1e-5;
            let n = (f(&l.forward(&xp).unwrap().0) - f(&l.forward(&xm).unwrap().0)) / 2e-5;
            assert!(crate::nncore::relative_error(dx.data[k], n) < 1e-5, "{k}: {n} vs {}", dx.data[k]);
        }
    }
}
