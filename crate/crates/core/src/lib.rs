//! Channel knowledge map reconstruction with conditional flow matching.

pub mod autodiff_net;
pub mod baselines;
pub mod conditioning;
pub mod error;
pub mod flow_engine;
pub mod metrics;
pub mod rng;
pub mod scene_sim;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Grid, Tensor};
