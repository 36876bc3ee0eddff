//! Frozen random convolutional features for distribution distances.
//!
//! There is no pretrained backbone for single-channel radio maps, so the
//! extractor is a fixed seeded network. Distances computed with it are only
//! comparable within one run.

use rand::Rng as _;

use crate::autodiff_net::layers::{conv_forward, silu, ConvGeom};
use crate::rng::rng_for;
use crate::tensor::Grid;

pub const FEATURE_SEED: u64 = 0xC0FFEE;
pub const FEATURE_DIM: usize = 64;
const WIDTHS: [usize; 4] = [1, 16, 32, FEATURE_DIM];

#[derive(Debug, Clone)]
struct Stage {
    geom: ConvGeom,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

/// Three (3×3 conv, SiLU, 2×2 average pool) stages and a global average.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    stages: Vec<Stage>,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new()
    }
}

fn avg_pool2(x: &[f32], c: usize, h: usize, w: usize) -> (Vec<f32>, usize, usize) {
    let (ho, wo) = ((h / 2).max(1), (w / 2).max(1));
    let (ph, pw) = (if h >= 2 { 2 } else { 1 }, if w >= 2 { 2 } else { 1 });
    let scale = 1.0 / (ph * pw) as f32;
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        for r in 0..ho {
            for col in 0..wo {
                let mut s = 0.0;
                for dr in 0..ph {
                    for dc in 0..pw {
                        s += x[(ch * h + r * ph + dr) * w + col * pw + dc];
                    }
                }
                out[(ch * ho + r) * wo + col] = s * scale;
            }
        }
    }
    (out, ho, wo)
}

impl FeatureExtractor {
    pub fn new() -> Self {
        let stages = WIDTHS
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let geom = ConvGeom {
                    cin: w[0],
                    cout: w[1],
                    k: 3,
                    stride: 1,
                };
                let bound = (6.0 / (w[0] * 9) as f32).sqrt();
                let mut rng = rng_for(FEATURE_SEED, &[i as u64]);
                let weight = (0..geom.weight_len())
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect();
                Stage {
                    geom,
                    weight,
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        Self { stages }
    }

    /// Features of one map with values in `[0, 1]`; out-of-range values are
    /// clamped.
    pub fn extract(&self, x: &Grid) -> Vec<f64> {
        let mut a: Vec<f32> = x.data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let (mut h, mut w) = (x.height, x.width);
        for s in &self.stages {
            let (y, _) = conv_forward(&s.weight, &s.bias, &a, h, w, &s.geom);
            let (p, ph, pw) = avg_pool2(&silu(&y), s.geom.cout, h, w);
            a = p;
            h = ph;
            w = pw;
        }
        a.chunks_exact(h * w)
            .map(|plane| plane.iter().map(|&v| v as f64).sum::<f64>() / (h * w) as f64)
            .collect()
    }

    pub fn extract_batch(&self, xs: &[Grid]) -> Vec<Vec<f64>> {
        use rayon::prelude::*;
        xs.par_iter().map(|x| self.extract(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let g = Grid::new(8, 8, (0..64).map(|i| i as f32 / 64.0).collect()).unwrap();
        let a = FeatureExtractor::new().extract(&g);
        let b = FeatureExtractor::new().extract(&g);
        assert_eq!(a.len(), FEATURE_DIM);
        assert_eq!(a, b);
    }

    #[test]
    fn constant_images_separate() {
        let fx = FeatureExtractor::new();
        let z = fx.extract(&Grid::filled(32, 32, 0.0));
        let o = fx.extract(&Grid::filled(32, 32, 1.0));
        let d: f64 = z.iter().zip(&o).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(d > 0.0);
    }
}
