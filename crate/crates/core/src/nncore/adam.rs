use serde::{Deserialize, Serialize};

use super::Module;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }
}

/// Adam with decoupled weight decay. Moment buffers follow the trainable
/// slots in visit order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step<M: Module + ?Sized>(&mut self, model: &mut M) -> Result<()> {
        let mut sizes = Vec::new();
        model.visit("", &mut |_, p| {
            if p.trainable {
                sizes.push(p.len());
            }
        });
        if self.m.is_empty() {
            self.m = sizes.iter().map(|&n| vec![0.0; n]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != sizes.len() || self.m.iter().zip(&sizes).any(|(m, &n)| m.len() != n) {
            return Err(Error::ShapeMismatch("optimizer state does not match the model".into()));
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let mut k = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_mut("", &mut |_, p| {
            if !p.trainable {
                return;
            }
            let (m, v) = (&mut ms[k], &mut vs[k]);
            for (i, (theta, &g)) in p.value.data.iter_mut().zip(&p.grad.data).enumerate() {
                *theta -= c.lr * c.weight_decay * *theta;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *theta -= c.lr * mhat / (vhat.sqrt() + c.eps);
            }
            k += 1;
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::param::join;
    use crate::nncore::{Param, Tensor};

    struct One(Param);

    impl Module for One {
        fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
            f(&join(prefix, "x"), &self.0);
        }
        fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
            f(&join(prefix, "x"), &mut self.0);
        }
    }

    fn scalar(theta: f64, g: f64) -> One {
        let mut p = Param::new(Tensor::filled(&[1], theta));
        p.grad.data[0] = g;
        One(p)
    }

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let mut m = scalar(0.37, 0.0);
        let mut opt = Adam::new(AdamConfig::new(0.001, 0.0));
        for _ in 0..10 {
            opt.step(&mut m).unwrap();
        }
        assert_eq!(m.0.value.data[0], 0.37);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut m = scalar(1.0, 2.0);
        Adam::new(AdamConfig::new(0.001, 0.0)).step(&mut m).unwrap();
        assert!((m.0.value.data[0] - 0.999).abs() < 1e-6);
    }

    #[test]
    fn decay_only_step() {
        let mut m = scalar(1.0, 0.0);
        Adam::new(AdamConfig::new(0.0005, 1e-5)).step(&mut m).unwrap();
        assert_eq!(m.0.value.data[0], 1.0 - 0.0005 * 1e-5 * 1.0);
    }

    #[test]
    fn state_mismatch_is_rejected() {
        let mut opt = Adam::new(AdamConfig::new(0.001, 0.0));
        opt.step(&mut scalar(1.0, 1.0)).unwrap();
        let mut two = One(Param::new(Tensor::zeros(&[2])));
        assert!(matches!(opt.step(&mut two), Err(Error::ShapeMismatch(_))));
    }
}
