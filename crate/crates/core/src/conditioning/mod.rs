//! Condition tensors for both tasks.
//!
//! Gain maps: the sparse noisy observation is upsampled with a bicubic kernel
//! and stacked with an outdoor mask and a blockage-edge map. Covariances: the
//! ring neighbors are stacked as real/imaginary channel pairs.

mod assemble;
mod degrade;
mod interp;
mod morphology;
mod norm;

pub use assemble::{
    assemble_condition_a, assemble_condition_b, ConditionTensorA, ConditionTensorB, MaskSource,
};
pub use degrade::{degrade, DegradationConfig};
pub use interp::{upsample_bicubic, upsample_bilinear, CATMULL_ROM_A};
pub use morphology::{extract_edges, extract_mask, DEFAULT_TAU_B};
pub use norm::{compute_norm_stats, denormalize, normalize, NormStats, SIGMA_FLOOR};
