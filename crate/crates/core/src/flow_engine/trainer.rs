//! Minibatch training loop shared by every learned method.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{gfm_loss, gfm_loss_grad};
use super::path::FlowSample;
use crate::autodiff_net::{adam_step, AdamConfig, AdamState, ParamStore, VelocityNet};
use crate::error::{Error, Result};
use crate::rng::{rng_for, Rng};
use crate::scene_sim::Task;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f32,
    pub epochs: usize,
    pub seed: u64,
    pub task: Task,
    /// Cosine-anneal the learning rate to `lr_floor · lr` over all epochs.
    pub cosine_decay: bool,
    pub lr_floor: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lr: 2e-3,
            epochs: 40,
            seed: 0,
            task: Task::A,
            cosine_decay: true,
            lr_floor: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("lr must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.lr_floor) {
            return Err(Error::config("lr_floor must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f32 {
        if !self.cosine_decay || self.epochs <= 1 {
            return self.lr;
        }
        let p = epoch as f64 / (self.epochs - 1) as f64;
        let floor = self.lr_floor as f64;
        let scale = floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos());
        (self.lr as f64 * scale) as f32
    }
}

/// Normalized condition and target for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPair {
    pub c: Tensor,
    pub x1: Tensor,
}

/// Network input, time and regression target drawn for one pair.
#[derive(Debug, Clone)]
pub struct Draw {
    pub x_in: Tensor,
    pub t: f64,
    pub target: Tensor,
}

/// What the network is trained to predict.
pub trait Objective: Sync {
    fn draw(&self, pair: &TrainPair, rng: &mut Rng) -> Result<Draw>;
}

/// Velocity regression on the straight noise-to-data path.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlowMatching;

impl Objective for FlowMatching {
    fn draw(&self, pair: &TrainPair, rng: &mut Rng) -> Result<Draw> {
        let x1 = &pair.x1;
        let x0 = Tensor::randn(x1.channels, x1.height, x1.width, rng);
        let t: f64 = rng.random_range(0.0..=1.0);
        let s = FlowSample::new(x0, x1.clone(), t)?;
        Ok(Draw {
            x_in: s.x_t,
            t,
            target: s.u_target,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ParamStore,
    pub adam: AdamState,
    /// Epochs already completed.
    pub epoch: usize,
    pub losses: Vec<f64>,
}

impl TrainState {
    pub fn fresh(params: ParamStore) -> Self {
        let n = params.len();
        Self {
            params,
            adam: AdamState::new(n),
            epoch: 0,
            losses: Vec::new(),
        }
    }
}

/// Passed to the per-epoch callback after each epoch.
pub struct EpochEnd<'a> {
    pub epoch: usize,
    pub mean_loss: f64,
    pub is_best: bool,
    pub state: &'a TrainState,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub best_params: ParamStore,
    pub best_epoch: usize,
    pub best_loss: f64,
}

/// Loss and parameter gradient for one pair, scaled by `weight`.
fn element_grad(
    net: &VelocityNet,
    params: &ParamStore,
    objective: &dyn Objective,
    pair: &TrainPair,
    rng: &mut Rng,
    weight: f64,
) -> Result<(f64, Vec<f32>)> {
    let d = objective.draw(pair, rng)?;
    let (v, cache) = net.forward(params, &d.x_in, d.t, &pair.c)?;
    let loss = gfm_loss(&v, &d.target)?;
    let gv = gfm_loss_grad(&v, &d.target, weight);
    let g = net.backward(params, &cache, &gv)?;
    Ok((loss, g.params))
}

/// Run epochs `state.epoch .. cfg.epochs`. Randomness is keyed by
/// `(seed, epoch, position)`, so resuming from a saved state replays the
/// same stream and the result does not depend on the thread count.
pub fn train_with(
    net: &VelocityNet,
    data: &[TrainPair],
    cfg: &TrainConfig,
    objective: &dyn Objective,
    state: TrainState,
    on_epoch: &mut dyn FnMut(&EpochEnd<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    train_until(net, data, cfg, objective, state, cfg.epochs, on_epoch)
}

/// Like [`train_with`] but stops once `until` epochs have completed, while
/// the learning-rate schedule still spans `cfg.epochs`. Resuming the
/// returned state later continues the same run.
pub fn train_until(
    net: &VelocityNet,
    data: &[TrainPair],
    cfg: &TrainConfig,
    objective: &dyn Objective,
    mut state: TrainState,
    until: usize,
    on_epoch: &mut dyn FnMut(&EpochEnd<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    net.check_store(&state.params)?;
    let mut best = state
        .losses
        .iter()
        .enumerate()
        .fold((usize::MAX, f64::INFINITY), |b, (i, &l)| if l < b.1 { (i, l) } else { b });
    let mut best_params = state.params.clone();

    for epoch in state.epoch..until.min(cfg.epochs) {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed, &[0xE9, epoch as u64]));
        let adam_cfg = AdamConfig {
            lr: cfg.lr_at(epoch),
            ..Default::default()
        };
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let weight = 1.0 / batch.len() as f64;
            let params = &state.params;
            let results: Vec<Result<(f64, Vec<f32>)>> = batch
                .par_iter()
                .enumerate()
                .map(|(j, &i)| {
                    let mut rng = rng_for(cfg.seed, &[epoch as u64, (b * cfg.batch_size + j) as u64]);
                    element_grad(net, params, objective, &data[i], &mut rng, weight)
                })
                .collect();
            let mut grad = vec![0f32; state.params.len()];
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = r?;
                batch_loss += l;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += *b;
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {b}")));
            }
            loss_sum += batch_loss;
            adam_step(&mut state.params, &grad, &mut state.adam, &adam_cfg)?;
        }
        let mean = loss_sum / data.len() as f64;
        state.losses.push(mean);
        state.epoch = epoch + 1;
        let is_best = mean < best.1;
        if is_best {
            best = (epoch, mean);
            best_params = state.params.clone();
        }
        log::info!("epoch {:>4}  loss {mean:.6}", epoch + 1);
        on_epoch(&EpochEnd {
            epoch,
            mean_loss: mean,
            is_best,
            state: &state,
        })?;
    }
    Ok(TrainOutcome {
        state,
        best_params,
        best_epoch: best.0,
        best_loss: best.1,
    })
}

/// Flow-matching training from a fresh initialization.
pub fn train(net: &VelocityNet, data: &[TrainPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let state = TrainState::fresh(net.init_params(cfg.seed));
    train_with(net, data, cfg, &FlowMatching, state, &mut |_| Ok(()))
}
