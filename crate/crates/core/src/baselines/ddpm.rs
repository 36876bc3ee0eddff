//! Minimal epsilon-prediction diffusion baseline with ancestral sampling.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff_net::{ParamStore, VelocityNet};
use crate::error::{Error, Result};
use crate::flow_engine::{
    train_with, Draw, Objective, TrainConfig, TrainOutcome, TrainPair, TrainState,
};
use crate::rng::{rng_for, Rng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpmConfig {
    #[serde(rename = "T")]
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub seed: u64,
}

impl Default for DdpmConfig {
    /// The classic 1e-4..0.02 schedule is defined for 1000 steps; both ends
    /// are scaled by 1000/T so that 250 steps still reach near-pure noise.
    fn default() -> Self {
        Self::scaled(250)
    }
}

impl DdpmConfig {
    pub fn scaled(t_steps: usize) -> Self {
        let s = 1000.0 / t_steps.max(1) as f64;
        Self {
            t_steps,
            beta_start: 1e-4 * s,
            beta_end: (0.02 * s).min(0.999),
            seed: 0xD1FF,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_steps == 0 {
            return Err(Error::config("T must be >= 1"));
        }
        if !(0.0 < self.beta_start && self.beta_start < self.beta_end && self.beta_end < 1.0) {
            return Err(Error::config("need 0 < beta_start < beta_end < 1"));
        }
        Ok(())
    }
}

/// Precomputed linear schedule; index `t − 1` holds step `t`.
#[derive(Debug, Clone)]
pub struct DdpmSchedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl DdpmSchedule {
    pub fn new(cfg: &DdpmConfig) -> Result<Self> {
        cfg.validate()?;
        let t = cfg.t_steps;
        let betas: Vec<f64> = (0..t)
            .map(|i| {
                if t == 1 {
                    cfg.beta_start
                } else {
                    cfg.beta_start + (cfg.beta_end - cfg.beta_start) * i as f64 / (t - 1) as f64
                }
            })
            .collect();
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(t);
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `ᾱ_t` for `t ∈ 1..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    /// Posterior variance `β̃_t = (1 − ᾱ_{t−1})/(1 − ᾱ_t)·β_t`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        let prev = if t > 1 { self.alpha_bars[t - 2] } else { 1.0 };
        (1.0 - prev) / (1.0 - self.alpha_bars[t - 1]) * self.betas[t - 1]
    }

    /// `√ᾱ_t·x + √(1 − ᾱ_t)·ε`.
    pub fn noise(&self, x1: &Tensor, eps: &Tensor, t: usize) -> Tensor {
        let ab = self.alpha_bar(t);
        let (a, b) = (ab.sqrt() as f32, (1.0 - ab).sqrt() as f32);
        Tensor {
            channels: x1.channels,
            height: x1.height,
            width: x1.width,
            data: x1.data.iter().zip(&eps.data).map(|(x, e)| a * x + b * e).collect(),
        }
    }
}

/// Noise regression at a uniformly drawn step.
#[derive(Debug, Clone)]
pub struct DdpmObjective {
    pub schedule: DdpmSchedule,
}

impl Objective for DdpmObjective {
    fn draw(&self, pair: &TrainPair, rng: &mut Rng) -> Result<Draw> {
        let x1 = &pair.x1;
        let t_steps = self.schedule.steps();
        let t = rng.random_range(1..=t_steps);
        let eps = Tensor::randn(x1.channels, x1.height, x1.width, rng);
        Ok(Draw {
            x_in: self.schedule.noise(x1, &eps, t),
            t: t as f64 / t_steps as f64,
            target: eps,
        })
    }
}

pub fn ddpm_train(
    net: &VelocityNet,
    data: &[TrainPair],
    train: &TrainConfig,
    ddpm: &DdpmConfig,
) -> Result<TrainOutcome> {
    let objective = DdpmObjective {
        schedule: DdpmSchedule::new(ddpm)?,
    };
    let state = TrainState::fresh(net.init_params(train.seed));
    train_with(net, data, train, &objective, state, &mut |_| Ok(()))
}

/// Ancestral sampling from `t = T` down to 1 with `T` network evaluations;
/// the last step adds no noise. Noise is keyed by `(cfg.seed, sample)`.
pub fn ddpm_sample(
    net: &VelocityNet,
    params: &ParamStore,
    c: &Tensor,
    cfg: &DdpmConfig,
    sample: u64,
) -> Result<Tensor> {
    let sched = DdpmSchedule::new(cfg)?;
    let t_steps = sched.steps();
    let out_c = net.config().out_channels;
    let mut rng = rng_for(cfg.seed, &[0xA5, sample]);
    let mut x = Tensor::randn(out_c, c.height, c.width, &mut rng);
    for t in (1..=t_steps).rev() {
        let eps = net.predict(params, &x, t as f64 / t_steps as f64, c)?;
        let beta = sched.betas[t - 1];
        let inv_sqrt_alpha = 1.0 / sched.alphas[t - 1].sqrt();
        let coef = beta / (1.0 - sched.alpha_bar(t)).sqrt();
        let sigma = sched.posterior_variance(t).sqrt();
        let z = (t > 1).then(|| Tensor::randn(out_c, c.height, c.width, &mut rng));
        for i in 0..x.data.len() {
            let mean = inv_sqrt_alpha * (x.data[i] as f64 - coef * eps.data[i] as f64);
            let noise = z.as_ref().map_or(0.0, |z| sigma * z.data[i] as f64);
            x.data[i] = (mean + noise) as f32;
        }
        if !x.all_finite() {
            return Err(Error::NonFinite(format!("diffusion state at step {t}")));
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn product(t: usize, b0: f64, b1: f64) -> f64 {
        (0..t)
            .map(|i| 1.0 - (b0 + (b1 - b0) * i as f64 / (t - 1) as f64))
            .product()
    }

    #[test]
    fn default_schedule_nearly_destroys_signal() {
        let cfg = DdpmConfig::default();
        let s = DdpmSchedule::new(&cfg).unwrap();
        let oracle = product(250, 4e-4, 0.08);
        assert!((s.alpha_bar(250) - oracle).abs() < 1e-12);
        assert!(s.alpha_bar(250) < 0.01);
    }

    #[test]
    fn unscaled_schedule_at_250_steps_leaves_signal() {
        // The 1000-step endpoints over only 250 steps keep ᾱ_T near 0.08.
        let cfg = DdpmConfig {
            t_steps: 250,
            beta_start: 1e-4,
            beta_end: 0.02,
            seed: 0,
        };
        let ab = DdpmSchedule::new(&cfg).unwrap().alpha_bar(250);
        assert!((ab - product(250, 1e-4, 0.02)).abs() < 1e-12);
        assert!(ab > 0.05);
    }

    #[test]
    fn first_step() {
        let cfg = DdpmConfig::default();
        let s = DdpmSchedule::new(&cfg).unwrap();
        assert_eq!(s.alpha_bar(1), 1.0 - cfg.beta_start);
        assert_eq!(s.posterior_variance(1), 0.0);
    }

    #[test]
    fn invalid_schedules_rejected() {
        let mut c = DdpmConfig::default();
        c.beta_end = c.beta_start / 2.0;
        assert!(c.validate().is_err());
        c = DdpmConfig::default();
        c.t_steps = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn noising_is_variance_preserving() {
        let s = DdpmSchedule::new(&DdpmConfig::default()).unwrap();
        let mut rng = rng_for(7, &[]);
        let x = Tensor::randn(1, 100, 100, &mut rng);
        let e = Tensor::randn(1, 100, 100, &mut rng);
        for t in [1, 50, 125, 250] {
            let y = s.noise(&x, &e, t);
            let m = y.data.iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64;
            let var = y.data.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / y.len() as f64;
            assert!((var - 1.0).abs() < 0.05, "t={t}: {var}");
        }
    }
}
