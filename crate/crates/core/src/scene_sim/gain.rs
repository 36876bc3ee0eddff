use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::scene::{Rect, Scene};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationParams {
    /// Path loss at the reference distance, dB.
    pub pl0: f64,
    /// Reference distance, meters.
    pub ref_dist: f64,
    pub exponent: f64,
    /// Penetration loss per building edge crossed, dB.
    pub wall_loss: f64,
    pub shadow_sigma: f64,
    pub shadow_corr_px: usize,
    /// Number of propagation paths for covariance synthesis.
    pub n_paths: usize,
    /// Power ratio between consecutive paths.
    pub path_decay: f64,
    /// Quantization floor, also the in-building value.
    pub g_min: f64,
    pub g_max: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            pl0: 40.0,
            ref_dist: 1.0,
            exponent: 3.0,
            wall_loss: 8.0,
            shadow_sigma: 4.0,
            shadow_corr_px: 8,
            n_paths: 4,
            path_decay: 0.5,
            g_min: -160.0,
            g_max: -40.0,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        if !(1.5..=5.0).contains(&self.exponent) {
            return Err(Error::config(format!(
                "path loss exponent {} outside [1.5, 5]",
                self.exponent
            )));
        }
        if !(self.wall_loss >= 0.0) {
            return Err(Error::config("wall_loss must be >= 0"));
        }
        if self.n_paths == 0 {
            return Err(Error::config("n_paths must be >= 1"));
        }
        if !(self.ref_dist > 0.0) || !(self.shadow_sigma >= 0.0) {
            return Err(Error::config("ref_dist must be > 0 and shadow_sigma >= 0"));
        }
        if !(self.g_max > self.g_min) {
            return Err(Error::config("g_max must exceed g_min"));
        }
        if !(self.path_decay > 0.0) {
            return Err(Error::config("path_decay must be positive"));
        }
        Ok(())
    }
}

/// Log-distance path loss in dB at `dist` meters.
pub fn path_loss_db(dist: f64, p: &PropagationParams) -> f64 {
    p.pl0 + 10.0 * p.exponent * (dist.max(p.ref_dist) / p.ref_dist).log10()
}

/// Parametric interval `(t_in, t_out)` where segment `a → b` lies inside the
/// closed rectangle, if the overlap has positive length.
fn clip_segment(a: (f64, f64), b: (f64, f64), rect: &Rect) -> Option<(f64, f64)> {
    let lo = [rect.row0 as f64, rect.col0 as f64];
    let hi = [rect.row1 as f64, rect.col1 as f64];
    let p = [a.0, a.1];
    let d = [b.0 - a.0, b.1 - a.1];
    let (mut t_in, mut t_out) = (f64::NEG_INFINITY, f64::INFINITY);
    for axis in 0..2 {
        if d[axis] == 0.0 {
            if p[axis] <= lo[axis] || p[axis] >= hi[axis] {
                return None;
            }
        } else {
            let t1 = (lo[axis] - p[axis]) / d[axis];
            let t2 = (hi[axis] - p[axis]) / d[axis];
            t_in = t_in.max(t1.min(t2));
            t_out = t_out.min(t1.max(t2));
        }
    }
    (t_out - t_in > 1e-12).then_some((t_in, t_out))
}

/// Number of building edges crossed by the segment joining two pixel centers.
pub fn walls_crossed(scene: &Scene, from: (usize, usize), to: (usize, usize)) -> usize {
    let a = (from.0 as f64 + 0.5, from.1 as f64 + 0.5);
    let b = (to.0 as f64 + 0.5, to.1 as f64 + 0.5);
    scene
        .buildings
        .iter()
        .filter_map(|r| clip_segment(a, b, r))
        .map(|(t_in, t_out)| {
            usize::from(t_in > 0.0 && t_in < 1.0) + usize::from(t_out > 0.0 && t_out < 1.0)
        })
        .sum()
}

/// Zero-mean field with exact sample std `sigma`, box-smoothed over
/// `corr_px` pixels with edge replication.
fn shadow_field(h: usize, w: usize, sigma: f64, corr_px: usize, seed: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; h * w];
    }
    let mut rng = rng_for(seed, &[0x5AD0]);
    let raw: Vec<f64> = (0..h * w).map(|_| StandardNormal.sample(&mut rng)).collect();
    let k = corr_px.max(1);
    let lo = (k / 2) as isize;
    let hi = (k - 1 - k / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let s: f64 = (-lo..=hi)
                .map(|o| raw[r * w + clamp(c as isize + o, w)])
                .sum();
            tmp[r * w + c] = s / k as f64;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let s: f64 = (-lo..=hi)
                .map(|o| tmp[clamp(r as isize + o, h) * w + c])
                .sum();
            out[r * w + c] = s / k as f64;
        }
    }

    let n = (h * w) as f64;
    let mean = out.iter().sum::<f64>() / n;
    let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { sigma / var.sqrt() } else { 0.0 };
    out.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    out
}

/// Channel gain map in dB plus its 8-bit view.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMap {
    pub values: Grid,
    pub g_min: f64,
    pub g_max: f64,
    pub quantized: Vec<u8>,
}

impl GainMap {
    /// Clamp to `[g_min, g_max]` and quantize.
    pub fn from_values(mut values: Grid, g_min: f64, g_max: f64) -> Result<Self> {
        if !(g_max > g_min) {
            return Err(Error::config("g_max must exceed g_min"));
        }
        for v in &mut values.data {
            *v = (*v as f64).clamp(g_min, g_max) as f32;
        }
        let quantized = values
            .data
            .iter()
            .map(|&v| Self::quantize(v as f64, g_min, g_max))
            .collect();
        Ok(Self {
            values,
            g_min,
            g_max,
            quantized,
        })
    }

    pub fn quantize(v: f64, g_min: f64, g_max: f64) -> u8 {
        (255.0 * (v - g_min) / (g_max - g_min)).round().clamp(0.0, 255.0) as u8
    }

    pub fn dequantize(q: u8, g_min: f64, g_max: f64) -> f64 {
        g_min + q as f64 * (g_max - g_min) / 255.0
    }

    /// The quantized map as a real grid on the 0–255 scale.
    pub fn quantized_grid(&self) -> Grid {
        Grid {
            height: self.values.height,
            width: self.values.width,
            data: self.quantized.iter().map(|&q| q as f32).collect(),
        }
    }
}

pub fn compute_gain_map(scene: &Scene, p: &PropagationParams) -> Result<GainMap> {
    scene.validate()?;
    p.validate()?;
    let (h, w) = (scene.height_px, scene.width_px);
    let shadow = shadow_field(h, w, p.shadow_sigma, p.shadow_corr_px, scene.rng_seed);
    let (br, bc) = scene.bs_pos;
    let mut values = Grid::filled(h, w, p.g_min as f32);
    for r in 0..h {
        for c in 0..w {
            if scene.is_indoor(r, c) {
                continue;
            }
            let dr = r as f64 - br as f64;
            let dc = c as f64 - bc as f64;
            let dist = scene.cell_size * dr.hypot(dc);
            let walls = walls_crossed(scene, scene.bs_pos, (r, c)) as f64;
            let g = -path_loss_db(dist, p) - p.wall_loss * walls + shadow[r * w + c];
            values.set(r, c, g as f32);
        }
    }
    GainMap::from_values(values, p.g_min, p.g_max)
}
