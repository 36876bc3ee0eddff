//! Reference reconstructors: interpolation, nearest neighbors, direct
//! regression and a diffusion sampler.

mod ddpm;
mod interp;
mod knn;
mod method;
mod regression;

pub use ddpm::{ddpm_sample, ddpm_train, DdpmConfig, DdpmObjective, DdpmSchedule};
pub use interp::{bicubic_reconstruct, bilinear_reconstruct};
pub use knn::{knn_reconstruct_a, knn_reconstruct_a_with, knn_reconstruct_b, DEFAULT_K, DEFAULT_POWER};
pub use method::{LearnedModel, Method, Reconstructor};
pub use regression::{regression_reconstruct, regression_train, Regression};
