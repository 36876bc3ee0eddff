//! Differentiable velocity network with hand-written reverse mode.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod net;
pub mod params;
pub mod real;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{check_layer_types, grad_check, grad_check_with, GradCheckOptions, GradCheckReport, LayerError};
pub use layers::time_embedding;
pub use net::{ForwardCache, Gradients, VelocityNet, VelocityNetConfig};
pub use params::{ParamSlice, ParamStore};
pub use real::Real;
