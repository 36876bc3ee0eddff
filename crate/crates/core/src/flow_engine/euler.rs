//! Fixed-step Euler integration of the learned ODE.

use serde::{Deserialize, Serialize};

use crate::autodiff_net::{ParamStore, VelocityNet};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::Tensor;

/// Anything that yields a velocity field `v(x, t, c)`.
pub trait VelocityModel: Sync {
    fn velocity(&self, x: &Tensor, t: f64, c: &Tensor) -> Result<Tensor>;
}

/// A network bound to its parameters.
#[derive(Debug, Clone, Copy)]
pub struct NetModel<'a> {
    pub net: &'a VelocityNet,
    pub params: &'a ParamStore,
}

impl VelocityModel for NetModel<'_> {
    fn velocity(&self, x: &Tensor, t: f64, c: &Tensor) -> Result<Tensor> {
        self.net.predict(self.params, x, t, c)
    }
}

impl<F> VelocityModel for F
where
    F: Fn(&Tensor, f64, &Tensor) -> Result<Tensor> + Sync,
{
    fn velocity(&self, x: &Tensor, t: f64, c: &Tensor) -> Result<Tensor> {
        self(x, t, c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub steps: usize,
    pub seed: u64,
    pub hermitian_projection: bool,
    /// Clip negative eigenvalues after projection.
    pub psd_clip: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            seed: 0x5EED,
            hermitian_projection: true,
            psd_clip: false,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("steps must be >= 1"));
        }
        Ok(())
    }
}

/// Initial noise for one sample; keyed by the sample index so that results do
/// not depend on evaluation order.
pub fn initial_noise(seed: u64, sample: u64, channels: usize, height: usize, width: usize) -> Tensor {
    Tensor::randn(channels, height, width, &mut rng_for(seed, &[0x0E, sample]))
}

/// `x ← x + v(x, i/N, c)/N` for `i = 0..N`, starting from `x0`. The state
/// is accumulated in 64-bit so that long runs do not drift by `N` roundings.
pub fn euler_from(model: &dyn VelocityModel, x0: Tensor, c: &Tensor, steps: usize) -> Result<Tensor> {
    if steps == 0 {
        return Err(Error::config("steps must be >= 1"));
    }
    let dt = 1.0 / steps as f64;
    let mut acc: Vec<f64> = x0.data.iter().map(|&v| v as f64).collect();
    let mut x = x0;
    for i in 0..steps {
        let t = i as f64 / steps as f64;
        let v = model.velocity(&x, t, c)?;
        x.ensure_same_shape(&v, "velocity")?;
        for ((a, xv), b) in acc.iter_mut().zip(x.data.iter_mut()).zip(&v.data) {
            *a += *b as f64 * dt;
            *xv = *a as f32;
        }
        if !x.all_finite() {
            return Err(Error::NonFinite(format!("ODE state at step {i}")));
        }
    }
    Ok(x)
}

/// Integrate from seeded Gaussian noise of shape `target` to `t = 1`.
pub fn euler_integrate(
    model: &dyn VelocityModel,
    c: &Tensor,
    target: (usize, usize, usize),
    cfg: &InferenceConfig,
    sample: u64,
) -> Result<Tensor> {
    cfg.validate()?;
    let x0 = initial_noise(cfg.seed, sample, target.0, target.1, target.2);
    euler_from(model, x0, c, cfg.steps)
}
