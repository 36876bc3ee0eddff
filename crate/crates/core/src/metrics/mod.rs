//! Reconstruction quality metrics.

mod basic;
mod evaluate;
mod features;
mod fid;
mod msi;
mod ssim;

pub use basic::{mse, nmse, nmse_complex, psnr, psnr_from_mse, rmse};
pub use evaluate::{evaluate, reports_to_csv, reports_to_table, MetricsReport, SampleMetrics, CSV_HEADER};
pub use features::{FeatureExtractor, FEATURE_DIM, FEATURE_SEED};
pub use fid::{fid, fid_from_moments, mean_and_cov, FidResult, FID_RIDGE};
pub use msi::{msi, msi_one};
pub use ssim::{ssim, SSIM_K1, SSIM_K2, SSIM_L, SSIM_SIGMA, SSIM_WINDOW};
