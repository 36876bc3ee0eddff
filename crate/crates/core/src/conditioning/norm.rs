use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SIGMA_FLOOR: f32 = 1e-6;

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mu: Vec<f32>,
    pub sigma: Vec<f32>,
}

impl NormStats {
    pub fn channels(&self) -> usize {
        self.mu.len()
    }

    pub fn identity(channels: usize) -> Self {
        Self {
            mu: vec![0.0; channels],
            sigma: vec![1.0; channels],
        }
    }

    /// Statistics for a tensor whose channels repeat `self`'s pattern, e.g.
    /// neighbor real/imaginary pairs sharing the target's real/imaginary stats.
    pub fn tiled(&self, repeats: usize) -> Self {
        Self {
            mu: self.mu.repeat(repeats),
            sigma: self.sigma.repeat(repeats),
        }
    }

    /// Concatenate channel statistics.
    pub fn concat(parts: &[&NormStats]) -> Self {
        Self {
            mu: parts.iter().flat_map(|p| p.mu.iter().copied()).collect(),
            sigma: parts.iter().flat_map(|p| p.sigma.iter().copied()).collect(),
        }
    }

    pub fn select(&self, channels: &[usize]) -> Self {
        Self {
            mu: channels.iter().map(|&c| self.mu[c]).collect(),
            sigma: channels.iter().map(|&c| self.sigma[c]).collect(),
        }
    }
}

/// Population mean and std per channel over all tensors. Accumulation is
/// sequential in input order, so the result is bit-reproducible.
pub fn compute_norm_stats<'a, I>(tensors: I) -> Result<NormStats>
where
    I: IntoIterator<Item = &'a Tensor> + Clone,
{
    let mut sums: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for t in tensors.clone() {
        if sums.is_empty() {
            sums = vec![0.0; t.channels];
        } else if t.channels != sums.len() {
            return Err(Error::shape("tensors with differing channel counts"));
        }
        for (c, s) in sums.iter_mut().enumerate() {
            *s += t.channel(c).iter().map(|&v| v as f64).sum::<f64>();
        }
        count += t.plane_len();
    }
    if count == 0 {
        return Err(Error::config("statistics over an empty dataset"));
    }
    let mu: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0f64; mu.len()];
    for t in tensors {
        for (c, s) in sq.iter_mut().enumerate() {
            *s += t.channel(c).iter().map(|&v| (v as f64 - mu[c]).powi(2)).sum::<f64>();
        }
    }
    let sigma = sq
        .iter()
        .enumerate()
        .map(|(c, s)| {
            let sd = (s / count as f64).sqrt() as f32;
            if sd < SIGMA_FLOOR || !sd.is_finite() {
                log::warn!("channel {c} has (near) zero variance; sigma floored at {SIGMA_FLOOR}");
                SIGMA_FLOOR
            } else {
                sd
            }
        })
        .collect();
    Ok(NormStats {
        mu: mu.iter().map(|&m| m as f32).collect(),
        sigma,
    })
}

fn check(t: &Tensor, stats: &NormStats) -> Result<()> {
    if t.channels != stats.channels() {
        return Err(Error::shape(format!(
            "{} channels vs {} statistics",
            t.channels,
            stats.channels()
        )));
    }
    Ok(())
}

pub fn normalize(t: &Tensor, stats: &NormStats) -> Result<Tensor> {
    check(t, stats)?;
    let mut out = t.clone();
    for c in 0..t.channels {
        let (m, s) = (stats.mu[c], stats.sigma[c]);
        out.channel_mut(c).iter_mut().for_each(|v| *v = (*v - m) / s);
    }
    Ok(out)
}

pub fn denormalize(t: &Tensor, stats: &NormStats) -> Result<Tensor> {
    check(t, stats)?;
    let mut out = t.clone();
    for c in 0..t.channels {
        let (m, s) = (stats.mu[c], stats.sigma[c]);
        out.channel_mut(c).iter_mut().for_each(|v| *v = *v * s + m);
    }
    Ok(out)
}
