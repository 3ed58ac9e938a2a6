//! Minimal neural-network substrate for the benchmark policies.
//!
//! Everything is f64 and CPU-only with hand-written backward passes; the
//! networks involved are small enough (a few hundred units) that a tensor
//! framework would be mostly overhead. Gradients are accumulated into the
//! layers and read out flat, so one optimizer instance can drive any
//! combination of modules.

pub mod checkpoint;
pub mod conv;
pub mod mlp;
pub mod norm;
pub mod opt;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use conv::{Conv1d, ConvCache, ConvEncoder, EncoderCache};
pub use mlp::{Activation, Linear, Mlp, MlpCache};
pub use norm::AffineNormalizer;
pub use opt::Adam;

/// Logistic squash used by the policy action head.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of [`sigmoid`] expressed through its output value.
pub fn sigmoid_grad_from_output(s: f64) -> f64 {
    s * (1.0 - s)
}

/// Modules that expose their parameters and gradients as flat slices in a
/// stable order.
pub trait Parameterized {
    fn param_count(&self) -> usize;
    fn export_params(&self, out: &mut Vec<f64>);
    fn export_grads(&self, out: &mut Vec<f64>);
    /// Read parameters back from `src` starting at `*offset`, advancing it.
    fn import_params(&mut self, src: &[f64], offset: &mut usize);
    fn zero_grad(&mut self);
}
