//! Interpolation baselines.

use crate::conditioning::{upsample_bicubic, upsample_bilinear};
use crate::tensor::Grid;

pub fn bilinear_reconstruct(y: &Grid, height: usize, width: usize) -> Grid {
    upsample_bilinear(y, height, width)
}

pub fn bicubic_reconstruct(y: &Grid, height: usize, width: usize) -> Grid {
    upsample_bicubic(y, height, width)
}
