use rand::Rng;
use serde::{Deserialize, Serialize};

use super::param::join;
use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt};
use super::{Module, Param, Tensor};
use crate::error::{Error, Result};

/// `y = x·Wᵀ + b` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Linear {
            weight: Param::uniform(&[output, input], input, rng),
            bias: Param::zeros(&[output]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape[0]
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "linear expects {} inputs, got {}",
                self.in_dim(),
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = self.forward_no_bias(x)?;
        let b = &self.bias.value.data;
        for row in y.data.chunks_mut(b.len()) {
            row.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
        }
        Ok(y)
    }

    /// `x·Wᵀ` only; used when a batch norm follows and cancels the bias.
    pub fn forward_no_bias(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let (b, i, o) = (x.rows(), self.in_dim(), self.out_dim());
        let mut y = Tensor::zeros(&[b, o]);
        matmul_bt(&x.data, &self.weight.value.data, b, i, o, &mut y.data);
        Ok(y)
    }

    /// Accumulates weight and bias gradients and returns `∂L/∂x`.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Tensor {
        let o = self.out_dim();
        for row in dy.data.chunks(o) {
            self.bias.grad.data.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
        self.backward_no_bias(x, dy)
    }

    pub fn backward_no_bias(&mut self, x: &Tensor, dy: &Tensor) -> Tensor {
        let (b, i, o) = (x.rows(), self.in_dim(), self.out_dim());
        matmul_at_acc(&dy.data, &x.data, b, o, i, &mut self.weight.grad.data);
        let mut dx = Tensor::zeros(&[b, i]);
        matmul_acc(&dy.data, &self.weight.value.data, b, o, i, &mut dx.data);
        dx
    }
}

impl Module for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
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
    fn identity_weights_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut l = Linear::new(3, 3, &mut rng);
        l.weight.value.fill(0.0);
        for i in 0..3 {
            l.weight.value.data[i * 3 + i] = 1.0;
        }
        let x = random_tensor(&[4, 3], &mut rng);
        assert_eq!(l.forward(&x).unwrap(), x);
    }

    #[test]
    fn bias_gradient_of_sum_is_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut l = Linear::new(3, 2, &mut rng);
        let x = random_tensor(&[5, 3], &mut rng);
        let dy = Tensor::filled(&[5, 2], 1.0);
        l.backward(&x, &dy);
        // summed over the batch: one per row
        assert_eq!(l.bias.grad.data, vec![5.0, 5.0]);
        let mut l1 = Linear::new(3, 2, &mut rng);
        l1.backward(&random_tensor(&[1, 3], &mut rng), &Tensor::filled(&[1, 2], 1.0));
        assert_eq!(l1.bias.grad.data, vec![1.0, 1.0]);
    }

    #[test]
    fn shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = Linear::new(3, 2, &mut rng);
        assert!(matches!(l.forward(&Tensor::zeros(&[2, 4])), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn finite_difference_4x3() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut l = Linear::new(3, 4, &mut rng);
            let x = random_tensor(&[5, 3], &mut rng);
            let w = random_tensor(&[5, 4], &mut rng);
            let loss = |l: &Linear| -> Result<f64> {
                let y = l.forward(&x)?;
                Ok(y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum())
            };
            let report = grad_check(&mut l, 1e-5, GRAD_TOLERANCE, loss, |l: &mut Linear| {
                let y = l.forward(&x)?;
                l.backward(&x, &w);
                Ok(y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum())
            })
            .unwrap();
            assert!(report.max_error() < 1e-6, "seed {seed}: {report:?}");
        }
    }
}
