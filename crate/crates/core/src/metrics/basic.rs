//! Pointwise error metrics.

use crate::error::{Error, Result};

fn check(x: &[f32], y: &[f32]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::shape("empty input"));
    }
    Ok(())
}

fn sq_err(x: &[f32], y: &[f32]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = *a as f64 - *b as f64;
            d * d
        })
        .sum()
}

pub fn mse(x: &[f32], x_hat: &[f32]) -> Result<f64> {
    check(x, x_hat)?;
    Ok(sq_err(x, x_hat) / x.len() as f64)
}

pub fn rmse(x: &[f32], x_hat: &[f32]) -> Result<f64> {
    Ok(mse(x, x_hat)?.sqrt())
}

/// `Σ(x − x̂)² / Σx²`.
pub fn nmse(x: &[f32], x_hat: &[f32]) -> Result<f64> {
    check(x, x_hat)?;
    let norm: f64 = x.iter().map(|&v| (v as f64).powi(2)).sum();
    if norm == 0.0 {
        return Err(Error::ZeroNorm("nmse reference".into()));
    }
    Ok(sq_err(x, x_hat) / norm)
}

/// NMSE of a complex quantity stored as matching real and imaginary planes.
pub fn nmse_complex(re: &[f32], im: &[f32], re_hat: &[f32], im_hat: &[f32]) -> Result<f64> {
    check(re, re_hat)?;
    check(im, im_hat)?;
    let norm: f64 = re.iter().chain(im).map(|&v| (v as f64).powi(2)).sum();
    if norm == 0.0 {
        return Err(Error::ZeroNorm("nmse reference".into()));
    }
    Ok((sq_err(re, re_hat) + sq_err(im, im_hat)) / norm)
}

/// `10·log10(max²/mse)`; `+∞` when `mse` is zero.
pub fn psnr_from_mse(mse: f64, max_val: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_val * max_val / mse).log10()
    }
}

pub fn psnr(x: &[f32], x_hat: &[f32], max_val: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(x, x_hat)?, max_val))
}
