//! Loss machinery: class-reweighted cross-entropy, RBF-mixture MMD between
//! sub-domains on two feature granularities, Soft-MMD label concatenation,
//! symmetrized-KL distance, sample-pair attention weights, and the combined
//! objective with its parameter gradient.

mod class_weights;
mod divergence;
mod mmd;
mod sda;
mod total;

pub use class_weights::{class_weights, weighted_ce, CeOutput, ClassWeights, LOG_CLAMP};
pub use divergence::{check_simplex, js_distance, kl_divergence};
pub use mmd::{median_heuristic, mmd2, mmd2_relaxed, soft_mmd_features, strip_soft_block, KernelSpec, MmdOutput};
pub use sda::{sda_weights, SdaWeights};
pub use total::{
    classification_loss, prepare_terms, resolve_kernels, total_loss, AlignmentKernels, Halves, LossBreakdown, LossTerms,
};

/// Default Soft-MMD one-hot scale.
pub const SOFT_SCALE: f64 = 1.0;
/// Distance clamp for the attention weights.
pub const SDA_EPS: f64 = 1e-3;
/// Smoothing added to probability vectors before taking logs.
pub const KL_EPS: f64 = 1e-6;
/// Bandwidth multipliers applied to the median squared distance.
pub const BANDWIDTH_MULTIPLIERS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
