//! Uniform interface over every reconstruction method.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ddpm::{ddpm_sample, DdpmConfig, DdpmObjective, DdpmSchedule};
use super::interp::{bicubic_reconstruct, bilinear_reconstruct};
use super::knn::{knn_reconstruct_a, knn_reconstruct_b};
use super::regression::{regression_reconstruct, Regression};
use crate::autodiff_net::{ParamStore, VelocityNet, VelocityNetConfig};
use crate::conditioning::normalize;
use crate::error::{Error, Result};
use crate::flow_engine::{
    condition_for, euler_integrate, finish_output, ConditionConfig, FlowMatching, InferenceConfig,
    NetModel, Normalizer, Objective, Observation, Reconstruction,
};
use crate::scene_sim::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Knn,
    Bilinear,
    Bicubic,
    Regression,
    Ddpm,
    Gfm,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Knn,
        Method::Bilinear,
        Method::Bicubic,
        Method::Regression,
        Method::Ddpm,
        Method::Gfm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Knn => "knn",
            Method::Bilinear => "bilinear",
            Method::Bicubic => "bicubic",
            Method::Regression => "regression",
            Method::Ddpm => "ddpm",
            Method::Gfm => "gfm",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Method::Regression | Method::Ddpm | Method::Gfm)
    }

    /// Interpolators only make sense for gain maps.
    pub fn supports(self, task: Task) -> bool {
        !(task == Task::B && matches!(self, Method::Bilinear | Method::Bicubic))
    }

    /// Network topology for a learned method.
    pub fn net_config(
        self,
        cond_channels: usize,
        target_channels: usize,
        base_width: usize,
        depth: usize,
        time_embed_dim: usize,
    ) -> VelocityNetConfig {
        let in_channels = if self == Method::Regression {
            cond_channels
        } else {
            cond_channels + target_channels
        };
        VelocityNetConfig {
            in_channels,
            out_channels: target_channels,
            base_width,
            depth,
            time_embed_dim,
        }
    }

    pub fn objective(self, ddpm: &DdpmConfig) -> Result<Box<dyn Objective>> {
        Ok(match self {
            Method::Gfm => Box::new(FlowMatching),
            Method::Regression => Box::new(Regression),
            Method::Ddpm => Box::new(DdpmObjective {
                schedule: DdpmSchedule::new(ddpm)?,
            }),
            m => return Err(Error::config(format!("method '{m}' is not trained"))),
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method '{s}'")))
    }
}

/// A trained network with everything needed to run it.
#[derive(Debug, Clone)]
pub struct LearnedModel {
    pub method: Method,
    pub net: VelocityNet,
    pub params: ParamStore,
    pub norm: Normalizer,
    pub cond: ConditionConfig,
}

#[derive(Debug, Clone)]
pub enum Reconstructor {
    Knn { k: usize },
    Bilinear,
    Bicubic,
    Learned {
        model: Box<LearnedModel>,
        infer: InferenceConfig,
        ddpm: DdpmConfig,
    },
}

impl Reconstructor {
    pub fn method(&self) -> Method {
        match self {
            Reconstructor::Knn { .. } => Method::Knn,
            Reconstructor::Bilinear => Method::Bilinear,
            Reconstructor::Bicubic => Method::Bicubic,
            Reconstructor::Learned { model, .. } => model.method,
        }
    }

    /// Reconstruct one observation. `sample` keys any sampling noise.
    pub fn reconstruct(&self, obs: &Observation, sample: u64) -> Result<Reconstruction> {
        let method = self.method();
        if !method.supports(obs.task()) {
            return Err(Error::config(format!(
                "method '{method}' does not apply to task {}",
                obs.task().name()
            )));
        }
        match (self, obs) {
            (
                Reconstructor::Knn { k },
                Observation::A {
                    low_res,
                    height,
                    width,
                    ..
                },
            ) => Ok(Reconstruction::A(knn_reconstruct_a(low_res, *height, *width, *k)?)),
            (Reconstructor::Knn { .. }, Observation::B { neighbors, .. }) => {
                Ok(Reconstruction::B(knn_reconstruct_b(neighbors)?))
            }
            (
                Reconstructor::Bilinear,
                Observation::A {
                    low_res,
                    height,
                    width,
                    ..
                },
            ) => Ok(Reconstruction::A(bilinear_reconstruct(low_res, *height, *width))),
            (
                Reconstructor::Bicubic,
                Observation::A {
                    low_res,
                    height,
                    width,
                    ..
                },
            ) => Ok(Reconstruction::A(bicubic_reconstruct(low_res, *height, *width))),
            (Reconstructor::Learned { model, infer, ddpm }, _) => {
                let c = normalize(&condition_for(obs, &model.cond)?, &model.norm.cond)?;
                let shape = (model.net.config().out_channels, c.height, c.width);
                let x = match model.method {
                    Method::Gfm => {
                        let m = NetModel {
                            net: &model.net,
                            params: &model.params,
                        };
                        euler_integrate(&m, &c, shape, infer, sample)?
                    }
                    Method::Regression => regression_reconstruct(&model.net, &model.params, &c)?,
                    Method::Ddpm => ddpm_sample(&model.net, &model.params, &c, ddpm, sample)?,
                    m => return Err(Error::config(format!("method '{m}' has no network"))),
                };
                finish_output(&x, &model.norm, obs, infer)
            }
            _ => unreachable!("task support checked above"),
        }
    }
}
