//! Straight-line transport between noise and data.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One training tuple on the linear path.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub x0: Tensor,
    pub x1: Tensor,
    pub t: f64,
    pub x_t: Tensor,
    pub u_target: Tensor,
}

impl FlowSample {
    pub fn new(x0: Tensor, x1: Tensor, t: f64) -> Result<Self> {
        let x_t = sample_path(&x0, &x1, t)?;
        let u_target = target_velocity(&x0, &x1)?;
        Ok(Self {
            x0,
            x1,
            t,
            x_t,
            u_target,
        })
    }
}

/// `x_t = (1 − t)·x0 + t·x1`; exact at both endpoints.
pub fn sample_path(x0: &Tensor, x1: &Tensor, t: f64) -> Result<Tensor> {
    x0.ensure_same_shape(x1, "sample_path")?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::config(format!("t = {t} outside [0, 1]")));
    }
    let data = if t == 0.0 {
        x0.data.clone()
    } else if t == 1.0 {
        x1.data.clone()
    } else {
        let (a, b) = ((1.0 - t) as f32, t as f32);
        x0.data.iter().zip(&x1.data).map(|(p, q)| a * p + b * q).collect()
    };
    Tensor::from_vec(x0.channels, x0.height, x0.width, data)
}

/// `u = x1 − x0`.
pub fn target_velocity(x0: &Tensor, x1: &Tensor) -> Result<Tensor> {
    x0.ensure_same_shape(x1, "target_velocity")?;
    let data = x1.data.iter().zip(&x0.data).map(|(b, a)| b - a).collect();
    Tensor::from_vec(x0.channels, x0.height, x0.width, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use proptest::prelude::*;

    fn rand_pair(seed: u64) -> (Tensor, Tensor) {
        let mut rng = rng_for(seed, &[]);
        (Tensor::randn(2, 3, 4, &mut rng), Tensor::randn(2, 3, 4, &mut rng))
    }

    #[test]
    fn endpoints_exact() {
        let (a, b) = rand_pair(1);
        assert_eq!(sample_path(&a, &b, 0.0).unwrap(), a);
        assert_eq!(sample_path(&a, &b, 1.0).unwrap(), b);
    }

    #[test]
    fn midpoint_of_constants() {
        let a = Tensor::full(1, 2, 2, 0.0);
        let b = Tensor::full(1, 2, 2, 2.0);
        assert!(sample_path(&a, &b, 0.5).unwrap().data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn velocity_cases() {
        let (a, b) = rand_pair(2);
        assert!(target_velocity(&a, &a).unwrap().data.iter().all(|&v| v == 0.0));
        let z = Tensor::zeros(2, 3, 4);
        assert_eq!(target_velocity(&z, &b).unwrap(), b);
        let ab = target_velocity(&a, &b).unwrap();
        let ba = target_velocity(&b, &a).unwrap();
        assert!(ab.data.iter().zip(&ba.data).all(|(p, q)| *p == -*q));
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::zeros(1, 2, 2);
        let b = Tensor::zeros(1, 2, 3);
        assert!(sample_path(&a, &b, 0.3).is_err());
        assert!(target_velocity(&a, &b).is_err());
        assert!(sample_path(&a, &a, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn flow_sample_invariants(seed in any::<u64>(), t in 0.0f64..=1.0) {
            let (a, b) = rand_pair(seed);
            let s = FlowSample::new(a.clone(), b.clone(), t).unwrap();
            for i in 0..a.len() {
                let expect = (1.0 - t) * a.data[i] as f64 + t * b.data[i] as f64;
                prop_assert!((s.x_t.data[i] as f64 - expect).abs() < 1e-6 * (1.0 + expect.abs()));
                prop_assert_eq!(s.u_target.data[i], b.data[i] - a.data[i]);
            }
        }
    }
}
