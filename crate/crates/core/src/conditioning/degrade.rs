use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};
use crate::tensor::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationConfig {
    /// Subsampling stride.
    pub factor: usize,
    /// Noise std on the 0–255 pixel scale.
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            factor: 4,
            noise_sigma: 30.0,
            rng_seed: 0xDE9,
        }
    }
}

impl DegradationConfig {
    /// Same stride and noise level with a noise stream private to one record.
    pub fn for_record(&self, index: u64) -> Self {
        Self {
            rng_seed: derive_seed(self.rng_seed, &[index]),
            ..self.clone()
        }
    }
}

/// `y = A x + n`: keep the top-left pixel of every `s × s` block and add
/// white Gaussian noise. The output is not clamped.
pub fn degrade(x: &Grid, cfg: &DegradationConfig) -> Result<Grid> {
    let s = cfg.factor;
    if s == 0 || x.height % s != 0 || x.width % s != 0 {
        return Err(Error::config(format!(
            "factor {s} does not divide {}x{}",
            x.height, x.width
        )));
    }
    if !(cfg.noise_sigma >= 0.0) {
        return Err(Error::config("noise_sigma must be >= 0"));
    }
    let (h, w) = (x.height / s, x.width / s);
    let mut y = Grid::filled(h, w, 0.0);
    let mut rng = rng_for(cfg.rng_seed, &[0xD0]);
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("sigma checked above");
    for i in 0..h {
        for j in 0..w {
            let n: f64 = if cfg.noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            y.set(i, j, (x.get(i * s, j * s) as f64 + n) as f32);
        }
    }
    Ok(y)
}
