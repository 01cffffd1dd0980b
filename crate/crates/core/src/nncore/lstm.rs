//! LSTM over `[batch, time, input]` sequences, optionally bidirectional.
//!
//! Gate order in the stacked weights is input, forget, cell, output. Both
//! directions start from zero state; the reverse direction reads the
//! sequence back to front and its outputs are stored at their original time
//! positions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::param::join;
use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt, sigmoid};
use super::{Module, Param, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmDirection {
    /// `[4H, I]`
    pub w_ih: Param,
    /// `[4H, H]`
    pub w_hh: Param,
    pub b_ih: Param,
    pub b_hh: Param,
}

impl LstmDirection {
    fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut b_ih = Param::zeros(&[4 * hidden]);
        b_ih.value.data[hidden..2 * hidden].fill(1.0);
        LstmDirection {
            w_ih: Param::uniform(&[4 * hidden, input], input, rng),
            w_hh: Param::uniform(&[4 * hidden, hidden], hidden, rng),
            b_ih,
            b_hh: Param::zeros(&[4 * hidden]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    pub directions: Vec<LstmDirection>,
}

/// Per time step (in processing order) for one direction.
#[derive(Debug, Clone)]
struct StepCache {
    t: usize,
    /// Activated gates `[B, 4H]`: i, f, g, o.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    h_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    x: Tensor,
    steps: Vec<Vec<StepCache>>,
}

impl Lstm {
    pub fn new(input: usize, hidden: usize, bidirectional: bool, rng: &mut impl Rng) -> Self {
        let n = if bidirectional { 2 } else { 1 };
        Lstm {
            input,
            hidden,
            directions: (0..n).map(|_| LstmDirection::new(input, hidden, rng)).collect(),
        }
    }

    pub fn output_width(&self) -> usize {
        self.hidden * self.directions.len()
    }

    /// `x: [B, T, I]` → `[B, T, D·H]`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LstmCache)> {
        if x.shape.len() != 3 || x.shape[2] != self.input || x.shape[1] == 0 {
            return Err(Error::ShapeMismatch(format!(
                "lstm expects [batch, time>0, {}], got {:?}",
                self.input, x.shape
            )));
        }
        let (b, tn, i, h) = (x.shape[0], x.shape[1], self.input, self.hidden);
        let dh = self.output_width();
        let mut out = Tensor::zeros(&[b, tn, dh]);
        let mut steps = Vec::with_capacity(self.directions.len());
        let mut xt = vec![0.0; b * i];
        let mut pre = vec![0.0; b * 4 * h];
        for (d, dir) in self.directions.iter().enumerate() {
            let mut hs = vec![0.0; b * h];
            let mut cs = vec![0.0; b * h];
            let mut cache = Vec::with_capacity(tn);
            for s in 0..tn {
                let t = if d == 0 { s } else { tn - 1 - s };
                for r in 0..b {
                    xt[r * i..(r + 1) * i]
                        .copy_from_slice(&x.data[(r * tn + t) * i..(r * tn + t + 1) * i]);
                }
                matmul_bt(&xt, &dir.w_ih.value.data, b, i, 4 * h, &mut pre);
                let mut rec = vec![0.0; b * 4 * h];
                matmul_bt(&hs, &dir.w_hh.value.data, b, h, 4 * h, &mut rec);
                let mut gates = vec![0.0; b * 4 * h];
                let mut tanh_c = vec![0.0; b * h];
                let c_prev = cs.clone();
                let h_prev = hs.clone();
                for r in 0..b {
                    for u in 0..4 * h {
                        let k = r * 4 * h + u;
                        let z = pre[k] + rec[k] + dir.b_ih.value.data[u] + dir.b_hh.value.data[u];
                        gates[k] = if (2 * h..3 * h).contains(&u) { z.tanh() } else { sigmoid(z) };
                    }
                    for u in 0..h {
                        let g = &gates[r * 4 * h..(r + 1) * 4 * h];
                        let c = g[h + u] * c_prev[r * h + u] + g[u] * g[2 * h + u];
                        let tc = c.tanh();
                        cs[r * h + u] = c;
                        tanh_c[r * h + u] = tc;
                        hs[r * h + u] = g[3 * h + u] * tc;
                        out.data[(r * tn + t) * dh + d * h + u] = hs[r * h + u];
                    }
                }
                cache.push(StepCache { t, gates, c_prev, h_prev, tanh_c });
            }
            steps.push(cache);
        }
        Ok((out, LstmCache { x: x.clone(), steps }))
    }

    /// Backpropagation through time. Accumulates parameter gradients and
    /// returns `∂L/∂x`.
    pub fn backward(&mut self, cache: &LstmCache, dy: &Tensor) -> Tensor {
        let x = &cache.x;
        let (b, tn, i, h) = (x.shape[0], x.shape[1], self.input, self.hidden);
        let dh_w = self.output_width();
        let mut dx = Tensor::zeros(&[b, tn, i]);
        let mut xt = vec![0.0; b * i];
        for (d, dir) in self.directions.iter_mut().enumerate() {
            let mut dh_next = vec![0.0; b * h];
            let mut dc_next = vec![0.0; b * h];
            let mut da = vec![0.0; b * 4 * h];
            for sc in cache.steps[d].iter().rev() {
                let t = sc.t;
                for r in 0..b {
                    let g = &sc.gates[r * 4 * h..(r + 1) * 4 * h];
                    for u in 0..h {
                        let k = r * h + u;
                        let dh = dy.data[(r * tn + t) * dh_w + d * h + u] + dh_next[k];
                        let (ig, fg, gg, og) = (g[u], g[h + u], g[2 * h + u], g[3 * h + u]);
                        let tc = sc.tanh_c[k];
                        let dc = dh * og * (1.0 - tc * tc) + dc_next[k];
                        let a = &mut da[r * 4 * h..(r + 1) * 4 * h];
                        a[u] = dc * gg * ig * (1.0 - ig);
                        a[h + u] = dc * sc.c_prev[k] * fg * (1.0 - fg);
                        a[2 * h + u] = dc * ig * (1.0 - gg * gg);
                        a[3 * h + u] = dh * tc * og * (1.0 - og);
                        dc_next[k] = dc * fg;
                    }
                }
                for r in 0..b {
                    xt[r * i..(r + 1) * i]
                        .copy_from_slice(&x.data[(r * tn + t) * i..(r * tn + t + 1) * i]);
                }
                matmul_at_acc(&da, &xt, b, 4 * h, i, &mut dir.w_ih.grad.data);
                matmul_at_acc(&da, &sc.h_prev, b, 4 * h, h, &mut dir.w_hh.grad.data);
                for row in da.chunks(4 * h) {
                    for (u, v) in row.iter().enumerate() {
                        dir.b_ih.grad.data[u] += v;
                        dir.b_hh.grad.data[u] += v;
                    }
                }
                let mut dxt = vec![0.0; b * i];
                matmul_acc(&da, &dir.w_ih.value.data, b, 4 * h, i, &mut dxt);
                for r in 0..b {
                    let dst = &mut dx.data[(r * tn + t) * i..(r * tn + t + 1) * i];
                    dst.iter_mut().zip(&dxt[r * i..(r + 1) * i]).for_each(|(a, v)| *a += v);
                }
                dh_next.fill(0.0);
                matmul_acc(&da, &dir.w_hh.value.data, b, 4 * h, h, &mut dh_next);
            }
        }
        dx
    }
}

impl Module for Lstm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        for (d, dir) in self.directions.iter().enumerate() {
            let p = join(prefix, if d == 0 { "fwd" } else { "bwd" });
            f(&join(&p, "w_ih"), &dir.w_ih);
            f(&join(&p, "w_hh"), &dir.w_hh);
            f(&join(&p, "b_ih"), &dir.b_ih);
            f(&join(&p, "b_hh"), &dir.b_hh);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (d, dir) in self.directions.iter_mut().enumerate() {
            let p = join(prefix, if d == 0 { "fwd" } else { "bwd" });
            f(&join(&p, "w_ih"), &mut dir.w_ih);
            f(&join(&p, "w_hh"), &mut dir.w_hh);
            f(&join(&p, "b_ih"), &mut dir.b_ih);
            f(&join(&p, "b_hh"), &mut dir.b_hh);
        }
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
    fn parameter_count_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = Lstm::new(415, 64, true, &mut rng);
        assert_eq!(l.param_count(), 2 * (4 * 64 * (415 + 64) + 8 * 64));
        assert_eq!(l.param_count(), 246_272);
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut l = Lstm::new(3, 4, true, &mut rng);
        l.visit_mut("", &mut |_, p| p.value.fill(0.0));
        let x = random_tensor(&[2, 5, 3], &mut rng);
        let (y, _) = l.forward(&x).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_cell_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = Lstm::new(2, 3, false, &mut rng);
        let x = random_tensor(&[1, 1, 2], &mut rng);
        let (y, _) = l.forward(&x).unwrap();
        let d = &l.directions[0];
        let h = 3;
        for u in 0..h {
            let z = |gate: usize| -> f64 {
                let row = gate * h + u;
                (0..2).map(|k| d.w_ih.value.data[row * 2 + k] * x.data[k]).sum::<f64>()
                    + d.b_ih.value.data[row]
                    + d.b_hh.value.data[row]
            };
            let c = sigmoid(z(0)) * z(2).tanh();
            let expect = sigmoid(z(3)) * c.tanh();
            assert!((y.data[u] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = Lstm::new(2, 3, false, &mut rng);
        assert_eq!(l.directions[0].b_ih.value.data, vec![0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for seed in 0..20 {
            for bidir in [false, true] {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut l = Lstm::new(3, 4, bidir, &mut rng);
                let x = random_tensor(&[2, 5, 3], &mut rng);
                let w = random_tensor(&[2, 5, l.output_width()], &mut rng);
                let f = |y: &Tensor| -> f64 { y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum() };
                let report = grad_check(
                    &mut l,
                    1e-5,
                    1e-5,
                    |l: &Lstm| Ok(f(&l.forward(&x)?.0)),
                    |l: &mut Lstm| {
                        let (y, c) = l.forward(&x)?;
                        l.backward(&c, &w);
                        Ok(f(&y))
                    },
                )
                .unwrap();
                assert!(report.pass, "seed {seed} bidir {bidir}: {report:?}");
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut l = Lstm::new(3, 4, true, &mut rng);
        let x = random_tensor(&[2, 4, 3], &mut rng);
        let w = random_tensor(&[2, 4, 8], &mut rng);
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
