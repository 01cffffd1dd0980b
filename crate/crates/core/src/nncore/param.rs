use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;

/// A named tensor slot. Trainable slots carry a gradient; buffers such as
/// batch-norm running statistics are saved with the model but never updated
/// by the optimiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(&value.shape);
        Param { value, grad, trainable: true }
    }

    pub fn buffer(value: Tensor) -> Self {
        Param { grad: Tensor::zeros(&[0]), value, trainable: false }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Param::new(Tensor::zeros(shape))
    }

    /// Uniform on `(-1/√fan_in, 1/√fan_in)`.
    pub fn uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut t = Tensor::zeros(shape);
        for v in t.data.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        Param::new(t)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns named parameter slots, visited in a fixed order.
pub trait Module {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));

    /// Number of trainable scalars.
    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| {
            if p.trainable {
                n += p.len();
            }
        });
        n
    }

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| {
            if p.trainable {
                p.grad.fill(0.0);
            }
        });
    }

    /// `(name, shape, trainable)` for every slot.
    fn slots(&self) -> Vec<(String, Vec<usize>, bool)> {
        let mut out = Vec::new();
        self.visit("", &mut |n, p| out.push((n.to_string(), p.value.shape.clone(), p.trainable)));
        out
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
