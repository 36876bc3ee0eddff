//! Direct regression with the same backbone: `x̂ = f(c)`, time fixed at 0.

use crate::autodiff_net::{ParamStore, VelocityNet};
use crate::error::Result;
use crate::flow_engine::{
    train_with, Draw, Objective, TrainConfig, TrainOutcome, TrainPair, TrainState,
};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Mean squared error to the target; the network sees only the condition.
#[derive(Debug, Clone, Copy, Default)]
pub struct Regression;

impl Objective for Regression {
    fn draw(&self, pair: &TrainPair, _rng: &mut Rng) -> Result<Draw> {
        Ok(Draw {
            x_in: Tensor::zeros(0, pair.c.height, pair.c.width),
            t: 0.0,
            target: pair.x1.clone(),
        })
    }
}

/// The network must be built with `in_channels` equal to the condition
/// channel count.
pub fn regression_train(net: &VelocityNet, data: &[TrainPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let state = TrainState::fresh(net.init_params(cfg.seed));
    train_with(net, data, cfg, &Regression, state, &mut |_| Ok(()))
}

/// Single forward pass in the normalized domain.
pub fn regression_reconstruct(net: &VelocityNet, params: &ParamStore, c: &Tensor) -> Result<Tensor> {
    net.predict(params, &Tensor::zeros(0, c.height, c.width), 0.0, c)
}
