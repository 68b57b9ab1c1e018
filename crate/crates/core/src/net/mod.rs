//! Compact point-cloud classifier: a shared per-point MLP, a channel-wise
//! max-pool, and a classifier MLP, with a hand-derived backward pass.
//!
//! Two feature taps feed the alignment losses: `f_l`, the pooled output of
//! the last embedding layer, and `f_h`, the output of the classifier's last
//! hidden layer.

mod adam;
mod backward;
mod checkpoint;
mod forward;
mod model;

pub use adam::{AdamConfig, AdamState};
pub use backward::{backward, Upstream};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_HEADER};
pub use forward::{forward, ForwardTrace, SampleTrace};
pub use model::{LayerView, ModelParams, NetShape};

#[inline]
pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
