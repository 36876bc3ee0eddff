//! Synthetic ground truth: scenes, channel gain maps and spatial covariance
//! fields.
//!
//! The generator is a log-distance path loss model with per-wall penetration
//! loss and box-smoothed Gaussian shadowing. Covariances come from a
//! half-wavelength uniform linear array seeing a line-of-sight path plus one
//! path per nearby building corner.

mod dataset;
mod gain;
mod scene;
mod scm;

pub use dataset::{
    generate_dataset, generate_record_a, generate_record_b, Dataset, DatasetDims, GenerateConfig,
    RecordA, RecordB, Records, Task, DATASET_MAGIC, DATASET_VERSION,
};
pub use gain::{compute_gain_map, path_loss_db, walls_crossed, GainMap, PropagationParams};
pub use scene::{generate_scene, Rect, Scene, SceneConfig};
pub use scm::{
    compute_scm, ring_offsets, steering_vector, CovarianceMap, RingDirection, RING_SIZE,
};
