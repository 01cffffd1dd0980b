//! Dense tensors, layers with hand-written backward passes, Adam and a
//! finite-difference gradient checker.

mod adam;
mod attention;
mod batchnorm;
mod checkpoint;
mod dropout;
pub mod gradcheck;
mod linear;
mod loss;
mod lstm;
pub mod param;
pub mod tensor;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use attention::{Attention, AttentionCache};
pub use batchnorm::{BatchNorm, BnCache, BN_EPS, BN_MOMENTUM};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dropout::{dropout, dropout_backward};
pub use gradcheck::{
    grad_check, relative_error, smallest_nonzero_gradient, stencil_is_smooth, GradCheckReport, FD_RESOLUTION, GRAD_EPS, GRAD_TOLERANCE,
};
pub use linear::Linear;
pub use loss::mse_loss;
pub use lstm::{Lstm, LstmCache};
pub use param::{Module, Param};
pub use tensor::Tensor;

/// Forward-pass mode. Training mode carries the seed that fixes every
/// dropout mask of the pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

/// Tensor with entries uniform on `[-1, 1)`.
pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    t
}
