//! Finite-difference gradient checks over every layer family and both
//! forecasters, on small random instances.
//!
//! Instances whose gradients central differences cannot resolve are
//! skipped before any difference is taken: a ReLU input that flips sign
//! within the difference stencil, a spline input close to a knot, or a
//! nonzero gradient entry below [`FD_RESOLUTION`].
//! Every instance that is checked must pass at the full tolerance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kan::{build_kan, knot_avoiding_tensor, BSplineConfig, KanLayer, KNOT_MARGIN};
use crate::models::{KanForecaster, KanForecasterConfig, LstmForecaster, LstmForecasterConfig};
use crate::nncore::param::join;
use crate::nncore::{
    dropout, dropout_backward, grad_check, mse_loss, random_tensor, smallest_nonzero_gradient, stencil_is_smooth, Attention, BatchNorm,
    GradCheckReport, Linear, Lstm, Mode, Module, Param, Tensor, FD_RESOLUTION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    Linear,
    BatchNorm,
    Dropout,
    Lstm,
    Attention,
    KanLayer,
    KanNetwork,
    LstmForecaster,
    KanForecaster,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Linear,
        Family::BatchNorm,
        Family::Dropout,
        Family::Lstm,
        Family::Attention,
        Family::KanLayer,
        Family::KanNetwork,
        Family::LstmForecaster,
        Family::KanForecaster,
    ];

    /// Single-layer families.
    pub const LAYERS: [Family; 6] =
        [Family::Linear, Family::BatchNorm, Family::Dropout, Family::Lstm, Family::Attention, Family::KanLayer];

    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::BatchNorm => "batchnorm",
            Family::Dropout => "dropout",
            Family::Lstm => "lstm",
            Family::Attention => "attention",
            Family::KanLayer => "kan",
            Family::KanNetwork => "kan_network",
            Family::LstmForecaster => "lstm_forecaster",
            Family::KanForecaster => "kan_forecaster",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub eps: f64,
    pub tolerance: f64,
    /// Instances that must be checked per family.
    pub instances: usize,
    /// Seeds tried per family before giving up.
    pub max_attempts: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { eps: crate::nncore::GRAD_EPS, tolerance: crate::nncore::GRAD_TOLERANCE, instances: 20, max_attempts: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyResult {
    pub family: &'static str,
    pub checked: usize,
    pub skipped: usize,
    pub max_error: f64,
    pub pass: bool,
    /// Worst slot of the first failing instance.
    pub failure: Option<String>,
}

/// Screens on the analytic gradient, then runs the check.
fn screened<M: Module>(
    model: &mut M,
    cfg: &SuiteConfig,
    loss: impl Fn(&M) -> Result<f64>,
    mut loss_and_grad: impl FnMut(&mut M) -> Result<f64>,
) -> Result<Option<GradCheckReport>> {
    model.zero_grad();
    loss_and_grad(model)?;
    if smallest_nonzero_gradient(model) < FD_RESOLUTION {
        return Ok(None);
    }
    grad_check(model, cfg.eps, cfg.tolerance, loss, loss_and_grad).map(Some)
}

struct DropoutNet {
    a: Linear,
    b: Linear,
}

impl Module for DropoutNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.a.visit(&join(prefix, "a"), f);
        self.b.visit(&join(prefix, "b"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.a.visit_mut(&join(prefix, "a"), f);
        self.b.visit_mut(&join(prefix, "b"), f);
    }
}

impl DropoutNet {
    fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, Tensor, Option<Vec<f64>>)> {
        let h = self.a.forward(x)?;
        let (d, mask) = dropout(&h, 0.3, mode, 0)?;
        Ok((self.b.forward(&d)?, d, mask))
    }
}

fn tiny_lstm_forecaster(seed: u64) -> LstmForecasterConfig {
    let bidirectional = seed % 2 == 0;
    LstmForecasterConfig {
        input_width: 3,
        seq_len: 3,
        hidden: 3,
        bidirectional,
        attention_width: if bidirectional { 6 } else { 3 },
        head_widths: [5, 4, 3],
        output: 4,
        dropout: 0.2,
    }
}

fn tiny_spline() -> BSplineConfig {
    BSplineConfig { grid_size: 5, ..Default::default() }
}

/// One random instance of `family`; `None` if it was screened out.
pub fn check_instance(family: Family, seed: u64, cfg: &SuiteConfig) -> Result<Option<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(family as u64));
    let mse = |y: &Tensor, t: &Tensor| mse_loss(y, t, &vec![true; t.len()]);
    match family {
        Family::Linear => {
            let mut m = Linear::new(4, 3, &mut rng);
            let x = random_tensor(&[5, 4], &mut rng);
            let t = random_tensor(&[5, 3], &mut rng);
            screened(&mut m, cfg, |m: &Linear| Ok(mse(&m.forward(&x)?, &t)?.0), |m: &mut Linear| {
                let (l, g) = mse(&m.forward(&x)?, &t)?;
                m.backward(&x, &g);
                Ok(l)
            })
        }
        Family::BatchNorm => {
            let mut m = BatchNorm::new(4);
            random_tensor(&[4], &mut rng).data.iter().enumerate().for_each(|(i, v)| {
                m.gamma.value.data[i] = 1.0 + 0.5 * v;
                m.beta.value.data[i] = 0.5 * v;
            });
            let x = random_tensor(&[6, 4], &mut rng);
            let t = random_tensor(&[6, 4], &mut rng);
            screened(&mut m, cfg, |m: &BatchNorm| Ok(mse(&m.forward_train(&x)?.0, &t)?.0), |m: &mut BatchNorm| {
                let (y, c) = m.forward_train(&x)?;
                let (l, g) = mse(&y, &t)?;
                m.backward(&c, &g);
                Ok(l)
            })
        }
        Family::Dropout => {
            let mut m = DropoutNet { a: Linear::new(4, 6, &mut rng), b: Linear::new(6, 3, &mut rng) };
            let x = random_tensor(&[5, 4], &mut rng);
            let t = random_tensor(&[5, 3], &mut rng);
            let mode = if seed % 2 == 0 { Mode::Eval } else { Mode::Train { seed } };
            screened(&mut m, cfg, |m: &DropoutNet| Ok(mse(&m.forward(&x, mode)?.0, &t)?.0), |m: &mut DropoutNet| {
                let (y, d, mask) = m.forward(&x, mode)?;
                let (l, g) = mse(&y, &t)?;
                let g = m.b.backward(&d, &g);
                m.a.backward(&x, &dropout_backward(&g, &mask));
                Ok(l)
            })
        }
        Family::Lstm => {
            let mut m = Lstm::new(3, 3, seed % 2 == 0, &mut rng);
            let x = random_tensor(&[3, 4, 3], &mut rng);
            let t = random_tensor(&[3, 4, m.output_width()], &mut rng);
            screened(&mut m, cfg, |m: &Lstm| Ok(mse(&m.forward(&x)?.0, &t)?.0), |m: &mut Lstm| {
                let (y, c) = m.forward(&x)?;
                let (l, g) = mse(&y, &t)?;
                m.backward(&c, &g);
                Ok(l)
            })
        }
        Family::Attention => {
            let mut m = Attention::new(4, &mut rng);
            let h = random_tensor(&[3, 5, 4], &mut rng);
            let t = random_tensor(&[3, 4], &mut rng);
            screened(&mut m, cfg, |m: &Attention| Ok(mse(&m.forward(&h)?.0, &t)?.0), |m: &mut Attention| {
                let (y, c) = m.forward(&h)?;
                let (l, g) = mse(&y, &t)?;
                m.backward(&c, &g);
                Ok(l)
            })
        }
        Family::KanLayer => {
            let mut m = KanLayer::new(3, 2, tiny_spline(), &mut rng)?;
            let x = knot_avoiding_tensor(&[4, 3], &m.config, 0.1, &mut rng);
            let t = random_tensor(&[4, 2], &mut rng);
            screened(&mut m, cfg, |m: &KanLayer| Ok(mse(&m.forward(&x)?.0, &t)?.0), |m: &mut KanLayer| {
                let (y, c) = m.forward(&x)?;
                let (l, g) = mse(&y, &t)?;
                m.backward(&c, &g);
                Ok(l)
            })
        }
        Family::KanNetwork | Family::KanForecaster => {
            let spline = tiny_spline();
            let mut m = if family == Family::KanNetwork {
                build_kan(&[5, 4, 3], spline, 0.2, seed)?
            } else {
                let c = KanForecasterConfig { widths: vec![4, 3], grid_size: 5, ..Default::default() };
                KanForecaster::new(c, seed)?.net
            };
            let x = knot_avoiding_tensor(&[3, m.input_width()], &spline, 0.1, &mut rng);
            let t = random_tensor(&[3, 4], &mut rng);
            let mode = Mode::Train { seed };
            if m.knot_margin(&m.forward(&x, mode)?.1) < KNOT_MARGIN {
                return Ok(None);
            }
            screened(&mut m, cfg, |m: &crate::kan::KanNetwork| Ok(mse(&m.forward(&x, mode)?.0, &t)?.0), |m| {
                let (y, c) = m.forward(&x, mode)?;
                let (l, g) = mse(&y, &t)?;
                m.backward(&c, &g);
                Ok(l)
            })
        }
        Family::LstmForecaster => {
            let mut m = LstmForecaster::new(tiny_lstm_forecaster(seed), seed)?;
            let x = random_tensor(&[5, m.input_width()], &mut rng);
            let t = random_tensor(&[5, 4], &mut rng);
            let mask: Vec<bool> = (0..20).map(|i| i % 7 != 3).collect();
            let mode = Mode::Train { seed };
            let pattern = |m: &LstmForecaster| Ok(m.relu_pattern(&m.forward(&x, mode)?.1));
            if !stencil_is_smooth(&mut m, cfg.eps, pattern)? {
                return Ok(None);
            }
            screened(&mut m, cfg, |m: &LstmForecaster| Ok(mse_loss(&m.forward(&x, mode)?.0, &t, &mask)?.0), |m| {
                let (y, c) = m.forward(&x, mode)?;
                let (l, g) = mse_loss(&y, &t, &mask)?;
                m.backward(&c, &g)?;
                Ok(l)
            })
        }
    }
}

pub fn check_family(family: Family, cfg: &SuiteConfig) -> Result<FamilyResult> {
    let mut out = FamilyResult { family: family.name(), checked: 0, skipped: 0, max_error: 0.0, pass: true, failure: None };
    for seed in 0..cfg.max_attempts as u64 {
        if out.checked == cfg.instances {
            break;
        }
        match check_instance(family, seed, cfg)? {
            None => out.skipped += 1,
            Some(r) => {
                out.checked += 1;
                out.max_error = out.max_error.max(r.max_error());
                if !r.pass && out.failure.is_none() {
                    let (slot, e) = r.errors.iter().fold(("", 0.0), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
                    out.failure = Some(format!("seed {seed}: {slot} relative error {e:.3e}"));
                }
                out.pass &= r.pass;
            }
        }
    }
    if out.checked < cfg.instances {
        out.pass = false;
        out.failure.get_or_insert_with(|| format!("only {} of {} instances were checkable", out.checked, cfg.instances));
    }
    Ok(out)
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<FamilyResult>> {
    if !(cfg.eps > 0.0) || !(cfg.tolerance > 0.0) || cfg.instances == 0 {
        return Err(Error::InvalidConfig("eps, tolerance and instances must be positive".into()));
    }
    Family::ALL.iter().map(|&f| check_family(f, cfg)).collect()
}

pub fn render(results: &[FamilyResult]) -> String {
    let mut out = format!("{:<16} {:>7} {:>7} {:>12}  {}\n", "family", "checked", "skipped", "max_rel_err", "result");
    for r in results {
        out.push_str(&format!(
            "{:<16} {:>7} {:>7} {:>12.3e}  {}{}\n",
            r.family,
            r.checked,
            r.skipped,
            r.max_error,
            if r.pass { "PASS" } else { "FAIL" },
            r.failure.as_ref().map(|f| format!(" ({f})")).unwrap_or_default()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn every_family_passes() {
        let results = run_suite(&SuiteConfig::default()).unwrap();
        assert_eq!(results.len(), Family::ALL.len());
        for r in &results {
            assert!(r.pass, "{}", render(&results));
            assert_eq!(r.checked, 20);
        }
    }

    #[test]
    fn larger_step_still_passes_for_layers() {
        // composite networks carry O(eps²) truncation error above 1e-4 here
        let cfg = SuiteConfig { eps: 1e-3, ..Default::default() };
        let results = run_suite(&cfg).unwrap();
        for r in results.iter().filter(|r| Family::LAYERS.iter().any(|f| f.name() == r.family)) {
            assert!(r.pass, "{}", render(&results));
        }
    }

    #[test]
    fn corrupted_backward_fails() {
        let cfg = SuiteConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = Linear::new(3, 2, &mut rng);
        let x = random_tensor(&[4, 3], &mut rng);
        let w = random_tensor(&[4, 2], &mut rng);
        let r = screened(&mut m, &cfg, |m: &Linear| Ok(dot(&m.forward(&x)?, &w)), |m: &mut Linear| {
            let y = m.forward(&x)?;
            let mut g = w.clone();
            g.data[0] *= 1.1;
            m.backward(&x, &g);
            Ok(dot(&y, &w))
        })
        .unwrap()
        .unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn bad_config() {
        assert!(run_suite(&SuiteConfig { eps: 0.0, ..Default::default() }).is_err());
    }
}
