//! Dense tensors, small MLPs with hand-written backpropagation, losses,
//! the Adam optimiser and the binary checkpoint container.

mod adam;
pub mod checkpoint;
mod loss;
mod mlp;
mod scalar;
mod tensor;

pub use adam::{adam_step, AdamState, ScalarParam};
pub use loss::{cross_entropy_loss, log_softmax, mse_loss, softmax};
pub use mlp::{Activation, Layer, Mlp};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Anything exposing `(name, params, grads)` triples to an optimiser.
pub trait ParamSet<T: Scalar> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut [T], &mut [T]));
}
