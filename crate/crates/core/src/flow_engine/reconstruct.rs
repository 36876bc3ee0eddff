//! End-to-end reconstruction: observation → condition → ODE → map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::euler::{euler_integrate, InferenceConfig, VelocityModel};
use super::hermitian::{hermitian_project, psd_clip};
use super::trainer::TrainPair;
use crate::conditioning::{
    assemble_condition_a, assemble_condition_b, compute_norm_stats, degrade, denormalize, normalize,
    DegradationConfig, MaskSource, NormStats, DEFAULT_TAU_B,
};
use crate::error::{Error, Result};
use crate::scene_sim::{CovarianceMap, Dataset, Records, Task};
use crate::tensor::{Grid, Tensor};

/// Source of the outdoor mask channel for gain-map conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", deny_unknown_fields)]
pub enum MaskMode {
    Estimated { tau_b: f32 },
    Oracle,
}

impl Default for MaskMode {
    fn default() -> Self {
        MaskMode::Estimated { tau_b: DEFAULT_TAU_B }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionConfig {
    pub degradation: DegradationConfig,
    pub mask: MaskMode,
}

/// What a reconstructor gets to see for one record.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    A {
        low_res: Grid,
        height: usize,
        width: usize,
        oracle_mask: Grid,
    },
    B {
        neighbors: Vec<CovarianceMap>,
        location: (usize, usize),
    },
}

impl Observation {
    pub fn task(&self) -> Task {
        match self {
            Observation::A { .. } => Task::A,
            Observation::B { .. } => Task::B,
        }
    }
}

/// One record prepared for training or evaluation (raw, unnormalized).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub index: usize,
    pub observation: Observation,
    pub condition: Tensor,
    pub target: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reconstruction {
    /// Gain map on the 0–255 scale, not clamped.
    A(Grid),
    B(CovarianceMap),
}

impl Reconstruction {
    pub fn task(&self) -> Task {
        match self {
            Reconstruction::A(_) => Task::A,
            Reconstruction::B(_) => Task::B,
        }
    }
}

/// Clamp a gain map to the displayable range.
pub fn clamp_for_export(g: &Grid) -> Grid {
    Grid {
        height: g.height,
        width: g.width,
        data: g.data.iter().map(|v| v.clamp(0.0, 255.0)).collect(),
    }
}

/// `[real; imag]` as a 2-channel `n × n` tensor.
pub fn covariance_tensor(r: &CovarianceMap) -> Tensor {
    let mut data = r.real.clone();
    data.extend_from_slice(&r.imag);
    Tensor {
        channels: 2,
        height: r.n,
        width: r.n,
        data,
    }
}

pub fn tensor_to_covariance(t: &Tensor, location: (usize, usize)) -> Result<CovarianceMap> {
    if t.channels != 2 || t.height != t.width {
        return Err(Error::shape("covariance tensor must be 2 × n × n"));
    }
    Ok(CovarianceMap {
        n: t.height,
        real: t.channel(0).to_vec(),
        imag: t.channel(1).to_vec(),
        location,
    })
}

pub fn condition_for(obs: &Observation, cfg: &ConditionConfig) -> Result<Tensor> {
    match obs {
        Observation::A {
            low_res,
            height,
            width,
            oracle_mask,
        } => {
            let mask = match cfg.mask {
                MaskMode::Estimated { tau_b } => MaskSource::Estimated { tau_b },
                MaskMode::Oracle => MaskSource::Oracle(oracle_mask),
            };
            Ok(assemble_condition_a(low_res, *height, *width, mask)?.0)
        }
        Observation::B { neighbors, .. } => Ok(assemble_condition_b(neighbors)?.0),
    }
}

/// Prepare the records at `indices`. Degradation noise is keyed by the
/// record index, so a record always sees the same observation.
pub fn build_examples(ds: &Dataset, indices: &[usize], cfg: &ConditionConfig) -> Result<Vec<Example>> {
    if let Some(&i) = indices.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::config(format!("record {i} out of range ({} records)", ds.len())));
    }
    indices
        .par_iter()
        .map(|&index| {
            let (observation, target) = match &ds.records {
                Records::A(recs) => {
                    let r = &recs[index];
                    let low_res = degrade(&r.target, &cfg.degradation.for_record(index as u64))?;
                    (
                        Observation::A {
                            low_res,
                            height: r.target.height,
                            width: r.target.width,
                            oracle_mask: r.oracle_mask.clone(),
                        },
                        r.target.clone().into_tensor(),
                    )
                }
                Records::B(recs) => {
                    let r = &recs[index];
                    (
                        Observation::B {
                            neighbors: r.neighbors.clone(),
                            location: r.target.location,
                        },
                        covariance_tensor(&r.target),
                    )
                }
            };
            let condition = condition_for(&observation, cfg)?;
            Ok(Example {
                index,
                observation,
                condition,
                target,
            })
        })
        .collect()
}

/// Per-channel statistics for conditions and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub cond: NormStats,
    pub target: NormStats,
}

impl Normalizer {
    /// Fit on training examples only.
    pub fn fit(train: &[Example]) -> Result<Self> {
        Ok(Self {
            cond: compute_norm_stats(train.iter().map(|e| &e.condition))?,
            target: compute_norm_stats(train.iter().map(|e| &e.target))?,
        })
    }

    pub fn pair(&self, e: &Example) -> Result<TrainPair> {
        Ok(TrainPair {
            c: normalize(&e.condition, &self.cond)?,
            x1: normalize(&e.target, &self.target)?,
        })
    }

    pub fn pairs(&self, examples: &[Example]) -> Result<Vec<TrainPair>> {
        examples.iter().map(|e| self.pair(e)).collect()
    }
}

/// Map a normalized network output back to a task output.
pub fn finish_output(
    x_norm: &Tensor,
    norm: &Normalizer,
    obs: &Observation,
    cfg: &InferenceConfig,
) -> Result<Reconstruction> {
    let x = denormalize(x_norm, &norm.target)?;
    match obs {
        Observation::A { .. } => Ok(Reconstruction::A(Grid::from_channel(&x, 0))),
        Observation::B { location, .. } => {
            let mut r = tensor_to_covariance(&x, *location)?;
            if cfg.hermitian_projection {
                r = hermitian_project(&r)?;
            }
            if cfg.psd_clip {
                r = psd_clip(&r)?;
            }
            Ok(Reconstruction::B(r))
        }
    }
}

/// Condition, normalize, integrate from seeded noise, denormalize and
/// post-process one observation.
pub fn reconstruct(
    model: &dyn VelocityModel,
    obs: &Observation,
    norm: &Normalizer,
    cond_cfg: &ConditionConfig,
    cfg: &InferenceConfig,
    sample: u64,
) -> Result<Reconstruction> {
    let c = normalize(&condition_for(obs, cond_cfg)?, &norm.cond)?;
    let shape = (norm.target.channels(), c.height, c.width);
    let x = euler_integrate(model, &c, shape, cfg, sample)?;
    finish_output(&x, norm, obs, cfg)
}
