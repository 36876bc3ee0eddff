//! Structural similarity with an 11×11 Gaussian window.

use crate::error::{Error, Result};
use crate::tensor::Grid;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_L: f64 = 255.0;

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering of `f(x, y)` with the window.
fn filter(x: &Grid, y: &Grid, w: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let k = w.len();
    let (h, wd) = (x.height, x.width);
    let (oh, ow) = (h - k + 1, wd - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            let mut s = 0.0;
            for (j, wj) in w.iter().enumerate() {
                s += wj * f(x.get(r, c + j) as f64, y.get(r, c + j) as f64);
            }
            tmp[r * ow + c] = s;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            let mut s = 0.0;
            for (i, wi) in w.iter().enumerate() {
                s += wi * tmp[(r + i) * ow + c];
            }
            out[r * ow + c] = s;
        }
    }
    out
}

/// Mean SSIM over all fully-contained windows.
pub fn ssim(x: &Grid, x_hat: &Grid) -> Result<f64> {
    if x.height != x_hat.height || x.width != x_hat.width {
        return Err(Error::shape("ssim inputs differ in size"));
    }
    if x.height < SSIM_WINDOW || x.width < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            x.height, x.width
        )));
    }
    let w = gaussian_window();
    let c1 = (SSIM_K1 * SSIM_L).powi(2);
    let c2 = (SSIM_K2 * SSIM_L).powi(2);
    let mx = filter(x, x_hat, &w, |a, _| a);
    let my = filter(x, x_hat, &w, |_, b| b);
    let sxx = filter(x, x_hat, &w, |a, _| a * a);
    let syy = filter(x, x_hat, &w, |_, b| b * b);
    let sxy = filter(x, x_hat, &w, |a, b| a * b);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (m1, m2) = (mx[i], my[i]);
        let vx = sxx[i] - m1 * m1;
        let vy = syy[i] - m2 * m2;
        let cov = sxy[i] - m1 * m2;
        total += ((2.0 * m1 * m2 + c1) * (2.0 * cov + c2)) / ((m1 * m1 + m2 * m2 + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}
