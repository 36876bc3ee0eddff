//! Conditional flow matching: path construction, loss, training and
//! Euler inference.

mod euler;
mod hermitian;
mod loss;
mod path;
mod reconstruct;
mod trainer;

pub use euler::{euler_from, euler_integrate, initial_noise, InferenceConfig, NetModel, VelocityModel};
pub use hermitian::{hermitian_project, hermitian_project_matrix, psd_clip};
pub use loss::{gfm_loss, gfm_loss_batch, gfm_loss_grad};
pub use path::{sample_path, target_velocity, FlowSample};
pub use reconstruct::{
    build_examples, clamp_for_export, condition_for, covariance_tensor, finish_output, reconstruct,
    tensor_to_covariance, ConditionConfig, Example, MaskMode, Normalizer, Observation, Reconstruction,
};
pub use trainer::{
    train, train_until, train_with, Draw, EpochEnd, FlowMatching, Objective, TrainConfig, TrainOutcome, TrainPair,
    TrainState,
};
