//! Mean squared velocity regression loss.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean over all elements of `(v_pred − u_target)²`.
pub fn gfm_loss(v_pred: &Tensor, u_target: &Tensor) -> Result<f64> {
    v_pred.ensure_same_shape(u_target, "gfm_loss")?;
    if !v_pred.all_finite() || !u_target.all_finite() {
        return Err(Error::NonFinite("loss inputs".into()));
    }
    if v_pred.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = v_pred
        .data
        .iter()
        .zip(&u_target.data)
        .map(|(a, b)| {
            let d = (*a - *b) as f64;
            d * d
        })
        .sum();
    Ok(s / v_pred.len() as f64)
}

/// Batch mean of per-element means.
pub fn gfm_loss_batch(v_pred: &[Tensor], u_target: &[Tensor]) -> Result<f64> {
    if v_pred.len() != u_target.len() || v_pred.is_empty() {
        return Err(Error::shape("batch sizes differ or are zero"));
    }
    let mut total = 0.0;
    for (v, u) in v_pred.iter().zip(u_target) {
        total += gfm_loss(v, u)?;
    }
    Ok(total / v_pred.len() as f64)
}

/// Gradient of [`gfm_loss`] with respect to `v_pred`, scaled by `weight`.
pub fn gfm_loss_grad(v_pred: &Tensor, u_target: &Tensor, weight: f64) -> Tensor {
    let k = (2.0 * weight / v_pred.len().max(1) as f64) as f32;
    Tensor {
        channels: v_pred.channels,
        height: v_pred.height,
        width: v_pred.width,
        data: v_pred.data.iter().zip(&u_target.data).map(|(a, b)| k * (a - b)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn zero_when_equal() {
        let mut rng = rng_for(3, &[]);
        let u = Tensor::randn(2, 4, 4, &mut rng);
        assert_eq!(gfm_loss(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn unit_offset_gives_one() {
        let mut rng = rng_for(4, &[]);
        let u = Tensor::randn(1, 8, 8, &mut rng);
        let v = u.map(|x| x + 1.0);
        assert!((gfm_loss(&v, &u).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matches_direct_recomputation() {
        let mut rng = rng_for(5, &[]);
        let v = Tensor::randn(3, 5, 7, &mut rng);
        let u = Tensor::randn(3, 5, 7, &mut rng);
        let mut acc = 0.0f64;
        for i in 0..v.len() {
            acc += ((v.data[i] - u.data[i]) as f64).powi(2);
        }
        let oracle = acc / v.len() as f64;
        assert!((gfm_loss(&v, &u).unwrap() - oracle).abs() < 1e-6 * oracle);
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let mut rng = rng_for(6, &[]);
        let v = Tensor::randn(1, 3, 3, &mut rng);
        let u = Tensor::randn(1, 3, 3, &mut rng);
        let g = gfm_loss_grad(&v, &u, 1.0);
        let mut vp = v.clone();
        vp.data[4] += 1e-2;
        let mut vm = v.clone();
        vm.data[4] -= 1e-2;
        let fd = (gfm_loss(&vp, &u).unwrap() - gfm_loss(&vm, &u).unwrap()) / 2e-2;
        assert!((fd - g.data[4] as f64).abs() < 1e-4);
    }

    #[test]
    fn non_finite_rejected() {
        let mut v = Tensor::zeros(1, 2, 2);
        v.data[0] = f32::INFINITY;
        assert!(gfm_loss(&v, &Tensor::zeros(1, 2, 2)).is_err());
    }
}
