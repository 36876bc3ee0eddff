//! Finite-difference verification of the hand-written backward passes.
//!
//! Central differences in 32-bit arithmetic carry roughly `ε_mach / ε` of
//! rounding noise, which swamps a 1e-3 tolerance. The comparison therefore
//! runs the identical generic code in 64-bit, and separately measures how far
//! the 32-bit analytic gradient drifts from the 64-bit one.

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::layers::{
    add_channel_bias, channel_sums, conv_backward, conv_forward, linear_backward, linear_forward,
    silu, silu_backward, upsample2x, upsample2x_backward, ConvGeom,
};
use super::net::{VelocityNet, VelocityNetConfig};
use super::params::ParamStore;
use crate::error::Result;
use crate::rng::{rng_for, Rng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Sampled parameter coordinates (on top of one per slice).
    pub samples: usize,
    pub eps: f64,
    pub height: usize,
    pub width: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            samples: 200,
            eps: 1e-3,
            height: 8,
            width: 8,
        }
    }
}

/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerError {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub param_count: usize,
    pub per_layer: Vec<LayerError>,
    /// Worst finite-difference mismatch over all checked coordinates.
    pub max_rel_error: f64,
    /// `‖g32 − g64‖∞ / ‖g64‖∞` over the full parameter gradient.
    pub f32_drift: f64,
}

fn gaussian(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameters with every slice randomized, including the zero-initialized
/// head and biases, so that no gradient is trivially zero.
pub fn random_params(net: &VelocityNet, seed: u64) -> ParamStore<f32> {
    let mut store = net.init_params(seed);
    let layout = store.layout().to_vec();
    let values = store.values_mut();
    for (i, s) in layout.iter().enumerate() {
        let fan_in: usize = if s.shape.len() >= 2 {
            s.shape[1..].iter().product()
        } else {
            16
        };
        let bound = (3.0 / fan_in as f64).sqrt();
        let mut rng = rng_for(seed, &[0x9c, i as u64]);
        for v in &mut values[s.range()] {
            *v = (rng.random_range(-bound..=bound)) as f32;
        }
    }
    store
}

/// Check the composed network; `corrupt` may tamper with the analytic
/// gradient to prove that errors are detected.
pub fn grad_check_with(
    config: &VelocityNetConfig,
    seed: u64,
    opts: &GradCheckOptions,
    corrupt: Option<&dyn Fn(&mut [f64])>,
) -> Result<GradCheckReport> {
    let net = VelocityNet::new(*config)?;
    let p32 = random_params(&net, seed);
    let p64: ParamStore<f64> = p32.cast();
    let (h, w) = (opts.height, opts.width);
    let mut rng = rng_for(seed, &[0x6c]);
    let xc = config.out_channels;
    let cc = config.in_channels - xc;
    let x = Tensor::from_vec(xc, h, w, gaussian(&mut rng, xc * h * w))?;
    let c = Tensor::from_vec(cc, h, w, gaussian(&mut rng, cc * h * w))?;
    let gv = Tensor::from_vec(xc, h, w, gaussian(&mut rng, xc * h * w))?;
    let t: f64 = rng.random_range(0.05..0.95);

    let (_, cache) = net.forward(&p64, &x, t, &c)?;
    let mut analytic = net.backward(&p64, &cache, &gv)?.params;
    if let Some(f) = corrupt {
        f(&mut analytic);
    }

    let loss = |p: &ParamStore<f64>| -> Result<f64> { Ok(dot(&net.predict(p, &x, t, &c)?.data, &gv.data)) };

    let n = p64.len();
    let mut coords: Vec<usize> = sample(&mut rng, n, opts.samples.min(n)).into_vec();
    for s in p64.layout() {
        coords.push(s.offset + rng.random_range(0..s.len()));
    }
    coords.sort_unstable();
    coords.dedup();

    let mut per_layer: Vec<LayerError> = p64
        .layout()
        .iter()
        .map(|s| LayerError {
            name: s.name.clone(),
            checked: 0,
            max_rel_error: 0.0,
        })
        .collect();
    let mut probe = p64.clone();
    for &i in &coords {
        let orig = probe.values()[i];
        probe.values_mut()[i] = orig + opts.eps;
        let up = loss(&probe)?;
        probe.values_mut()[i] = orig - opts.eps;
        let down = loss(&probe)?;
        probe.values_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * opts.eps);
        let e = rel_error(analytic[i], numeric);
        let slot = p64
            .layout()
            .iter()
            .position(|s| s.range().contains(&i))
            .expect("index inside layout");
        per_layer[slot].checked += 1;
        per_layer[slot].max_rel_error = per_layer[slot].max_rel_error.max(e);
    }

    let x32 = x.map(|v| v as f32);
    let c32 = c.map(|v| v as f32);
    let g32 = gv.map(|v| v as f32);
    let (_, cache32) = net.forward(&p32, &x32, t, &c32)?;
    let a32 = net.backward(&p32, &cache32, &g32)?.params;
    let exact = net.backward(&p64, &cache, &gv)?.params;
    let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let drift = a32
        .iter()
        .zip(&exact)
        .fold(0.0f64, |m, (a, b)| m.max((*a as f64 - b).abs()))
        / scale.max(REL_FLOOR);

    let max_rel_error = per_layer.iter().fold(0.0f64, |m, l| m.max(l.max_rel_error));
    Ok(GradCheckReport {
        param_count: n,
        per_layer,
        max_rel_error,
        f32_drift: drift,
    })
}

pub fn grad_check(config: &VelocityNetConfig, seed: u64) -> Result<GradCheckReport> {
    grad_check_with(config, seed, &GradCheckOptions::default(), None)
}

/// Every coordinate of both parameter and input gradients of a single op,
/// for the loss `Σ g ⊙ f(θ, x)`.
fn check_op(
    name: &str,
    theta: &[f64],
    x: &[f64],
    g: &[f64],
    eps: f64,
    fwd: impl Fn(&[f64], &[f64]) -> Vec<f64>,
    bwd: impl Fn(&[f64], &[f64], &[f64]) -> (Vec<f64>, Vec<f64>),
) -> LayerError {
    let (dtheta, dx) = bwd(theta, x, g);
    let loss = |th: &[f64], xx: &[f64]| dot(&fwd(th, xx), g);
    let mut worst = 0.0f64;
    let mut th = theta.to_vec();
    for i in 0..theta.len() {
        th[i] = theta[i] + eps;
        let up = loss(&th, x);
        th[i] = theta[i] - eps;
        let down = loss(&th, x);
        th[i] = theta[i];
        worst = worst.max(rel_error(dtheta[i], (up - down) / (2.0 * eps)));
    }
    let mut xx = x.to_vec();
    for i in 0..x.len() {
        xx[i] = x[i] + eps;
        let up = loss(theta, &xx);
        xx[i] = x[i] - eps;
        let down = loss(theta, &xx);
        xx[i] = x[i];
        worst = worst.max(rel_error(dx[i], (up - down) / (2.0 * eps)));
    }
    LayerError {
        name: name.to_string(),
        checked: theta.len() + x.len(),
        max_rel_error: worst,
    }
}

fn check_conv(name: &str, g: ConvGeom, h: usize, w: usize, rng: &mut Rng, eps: f64) -> LayerError {
    let (ho, wo) = g.out_dims(h, w);
    let theta = gaussian(rng, g.weight_len() + g.cout);
    let x = gaussian(rng, g.cin * h * w);
    let gy = gaussian(rng, g.cout * ho * wo);
    let nw = g.weight_len();
    check_op(
        name,
        &theta,
        &x,
        &gy,
        eps,
        |th, x| conv_forward(&th[..nw], &th[nw..], x, h, w, &g).0,
        |th, x, gy| {
            let (_, cols) = conv_forward(&th[..nw], &th[nw..], x, h, w, &g);
            let mut dth = vec![0.0; th.len()];
            let (dw, db) = dth.split_at_mut(nw);
            let dx = conv_backward(&th[..nw], &cols, gy, h, w, &g, dw, db);
            (dth, dx)
        },
    )
}

/// Each layer type in isolation.
pub fn check_layer_types(seed: u64, eps: f64) -> Vec<LayerError> {
    let mut rng = rng_for(seed, &[0x1a]);
    let mut out = vec![
        check_conv(
            "conv3x3",
            ConvGeom { cin: 2, cout: 3, k: 3, stride: 1 },
            5,
            6,
            &mut rng,
            eps,
        ),
        check_conv(
            "conv3x3_stride2",
            ConvGeom { cin: 2, cout: 3, k: 3, stride: 2 },
            6,
            6,
            &mut rng,
            eps,
        ),
        check_conv(
            "conv1x1",
            ConvGeom { cin: 3, cout: 2, k: 1, stride: 1 },
            4,
            5,
            &mut rng,
            eps,
        ),
    ];

    let (nin, nout) = (5, 4);
    let theta = gaussian(&mut rng, nin * nout + nout);
    let x = gaussian(&mut rng, nin);
    let gy = gaussian(&mut rng, nout);
    let nw = nin * nout;
    out.push(check_op(
        "linear",
        &theta,
        &x,
        &gy,
        eps,
        |th, x| linear_forward(&th[..nw], &th[nw..], x),
        |th, x, gy| {
            let mut dth = vec![0.0; th.len()];
            let (dw, db) = dth.split_at_mut(nw);
            let dx = linear_backward(&th[..nw], x, gy, dw, db);
            (dth, dx)
        },
    ));

    // Two stacked linear maps, no nonlinearity.
    let (a, b, cdim) = (4, 6, 3);
    let n1 = a * b + b;
    let theta = gaussian(&mut rng, n1 + b * cdim + cdim);
    let x = gaussian(&mut rng, a);
    let gy = gaussian(&mut rng, cdim);
    out.push(check_op(
        "linear_stack",
        &theta,
        &x,
        &gy,
        eps,
        |th, x| {
            let h1 = linear_forward(&th[..a * b], &th[a * b..n1], x);
            linear_forward(&th[n1..n1 + b * cdim], &th[n1 + b * cdim..], &h1)
        },
        |th, x, gy| {
            let h1 = linear_forward(&th[..a * b], &th[a * b..n1], x);
            let mut dth = vec![0.0; th.len()];
            let (d1, d2) = dth.split_at_mut(n1);
            let (dw2, db2) = d2.split_at_mut(b * cdim);
            let dh = linear_backward(&th[n1..n1 + b * cdim], &h1, gy, dw2, db2);
            let (dw1, db1) = d1.split_at_mut(a * b);
            let dx = linear_backward(&th[..a * b], x, &dh, dw1, db1);
            (dth, dx)
        },
    ));

    let x = gaussian(&mut rng, 24);
    let gy = gaussian(&mut rng, 24);
    out.push(check_op(
        "silu",
        &[],
        &x,
        &gy,
        eps,
        |_, x| silu(x),
        |_, x, gy| (Vec::new(), silu_backward(x, gy)),
    ));

    let (c, h, w) = (2, 3, 4);
    let x = gaussian(&mut rng, c * h * w);
    let gy = gaussian(&mut rng, c * 4 * h * w);
    out.push(check_op(
        "upsample2x",
        &[],
        &x,
        &gy,
        eps,
        |_, x| upsample2x(x, c, h, w),
        |_, _, gy| (Vec::new(), upsample2x_backward(gy, c, h, w)),
    ));

    let theta = gaussian(&mut rng, 3);
    let x = gaussian(&mut rng, 3 * 4);
    let gy = gaussian(&mut rng, 3 * 4);
    out.push(check_op(
        "channel_bias",
        &theta,
        &x,
        &gy,
        eps,
        |th, x| {
            let mut y = x.to_vec();
            add_channel_bias(&mut y, th);
            y
        },
        |_, _, gy| (channel_sums(gy, 3), gy.to_vec()),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VelocityNetConfig {
        VelocityNetConfig {
            in_channels: 3,
            out_channels: 1,
            base_width: 4,
            depth: 1,
            time_embed_dim: 8,
        }
    }

    #[test]
    fn layer_types_pass() {
        for l in check_layer_types(5, 1e-3) {
            // Piecewise-linear ops have no truncation error at all.
            let tol = if l.name == "silu" { 1e-4 } else { 1e-8 };
            assert!(l.max_rel_error < tol, "{}: {}", l.name, l.max_rel_error);
        }
    }

    #[test]
    fn tiny_net_passes() {
        let opts = GradCheckOptions {
            samples: 40,
            ..Default::default()
        };
        let r = grad_check_with(&small(), 3, &opts, None).unwrap();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
        assert!(r.f32_drift < 1e-3, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_detected() {
        let opts = GradCheckOptions {
            samples: 40,
            ..Default::default()
        };
        let corrupt = |g: &mut [f64]| g.iter_mut().for_each(|v| *v *= 1.5);
        let r = grad_check_with(&small(), 3, &opts, Some(&corrupt)).unwrap();
        assert!(r.max_rel_error > 1e-1);
    }
}
