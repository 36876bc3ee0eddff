//! Fréchet distance between Gaussian fits of two feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const FID_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidResult {
    pub value: f64,
    /// True when `FID_RIDGE·I` was added to both covariances.
    pub regularized: bool,
}

/// Sample mean and `1/(n−1)` covariance, accumulated in input order.
pub fn mean_and_cov(xs: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if xs.len() < 2 {
        return Err(Error::config("need at least 2 samples for a covariance"));
    }
    let d = xs[0].len();
    if d == 0 || xs.iter().any(|x| x.len() != d) {
        return Err(Error::shape("feature vectors differ in length"));
    }
    let n = xs.len() as f64;
    let mut mu = DVector::zeros(d);
    for x in xs {
        for i in 0..d {
            mu[i] += x[i];
        }
    }
    mu /= n;
    let mut cov = DMatrix::zeros(d, d);
    for x in xs {
        for i in 0..d {
            let di = x[i] - mu[i];
            for j in i..d {
                cov[(i, j)] += di * (x[j] - mu[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (n - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((mu, cov))
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let s = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&s) * e.eigenvectors.transpose()
}

fn is_ill_conditioned(m: &DMatrix<f64>) -> bool {
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = ev.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    min <= 1e-12 * max.max(1e-300)
}

/// FID from moments: `‖μr − μg‖² + Tr(Σr + Σg − 2(Σr^½ Σg Σr^½)^½)`.
pub fn fid_from_moments(
    mu_r: &DVector<f64>,
    cov_r: &DMatrix<f64>,
    mu_g: &DVector<f64>,
    cov_g: &DMatrix<f64>,
) -> Result<FidResult> {
    let d = mu_r.len();
    if mu_g.len() != d || cov_r.shape() != (d, d) || cov_g.shape() != (d, d) {
        return Err(Error::shape("moment dimensions differ"));
    }
    let regularized = is_ill_conditioned(cov_r) || is_ill_conditioned(cov_g);
    let (cr, cg) = if regularized {
        let ridge = DMatrix::identity(d, d) * FID_RIDGE;
        (cov_r + &ridge, cov_g + &ridge)
    } else {
        (cov_r.clone(), cov_g.clone())
    };
    let sr = sym_sqrt(&cr);
    let mut inner = &sr * &cg * &sr;
    inner = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum();
    let mean_term = (mu_r - mu_g).norm_squared();
    let value = mean_term + cr.trace() + cg.trace() - 2.0 * tr_sqrt;
    if !value.is_finite() {
        return Err(Error::NonFinite("fid".into()));
    }
    Ok(FidResult { value, regularized })
}

pub fn fid(real: &[Vec<f64>], generated: &[Vec<f64>]) -> Result<FidResult> {
    let (mr, cr) = mean_and_cov(real)?;
    let (mg, cg) = mean_and_cov(generated)?;
    fid_from_moments(&mr, &cr, &mg, &cg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand_distr::{Distribution, StandardNormal};

    fn cloud(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
        let mut rng = rng_for(seed, &[]);
        (0..n)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn identical_sets_are_zero() {
        let a = cloud(1, 50, 8);
        assert!(fid(&a, &a).unwrap().value.abs() < 1e-6);
        // rank-deficient: fewer samples than dimensions
        let b = cloud(2, 10, 64);
        let r = fid(&b, &b).unwrap();
        assert!(r.regularized);
        assert!(r.value.abs() < 1e-6);
    }

    #[test]
    fn one_dimensional_unit_shift() {
        // {−1, 1} has mean 0 and unbiased variance 2; scale to variance 1.
        let s = 1.0 / 2f64.sqrt();
        let real = vec![vec![-s], vec![s]];
        let gen = vec![vec![1.0 - s], vec![1.0 + s]];
        let r = fid(&real, &gen).unwrap();
        assert!(!r.regularized);
        assert!((r.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn diagonal_closed_form() {
        let mu_r: DVector<f64> = DVector::from_vec(vec![0.5, -1.0]);
        let mu_g: DVector<f64> = DVector::from_vec(vec![2.0, 0.0]);
        let sr = [1.5f64, 0.3];
        let sg = [0.7f64, 2.2];
        let cr = DMatrix::from_diagonal(&DVector::from_vec(sr.iter().map(|v| v * v).collect()));
        let cg = DMatrix::from_diagonal(&DVector::from_vec(sg.iter().map(|v| v * v).collect()));
        let want: f64 = (0..2)
            .map(|i| (mu_r[i] - mu_g[i]).powi(2) + (sr[i] - sg[i]).powi(2))
            .sum();
        let got = fid_from_moments(&mu_r, &cr, &mu_g, &cg).unwrap().value;
        assert!((got - want).abs() < 1e-6);
    }

    #[test]
    fn symmetric_and_non_negative() {
        let a = cloud(3, 40, 6);
        let b: Vec<Vec<f64>> = cloud(4, 40, 6)
            .into_iter()
            .map(|v| v.into_iter().map(|x| 2.0 * x + 0.3).collect())
            .collect();
        let ab = fid(&a, &b).unwrap().value;
        let ba = fid(&b, &a).unwrap().value;
        assert!((ab - ba).abs() < 1e-6);
        assert!(ab >= -1e-6);
    }

    #[test]
    fn too_few_samples() {
        assert!(fid(&cloud(5, 1, 3), &cloud(6, 5, 3)).is_err());
    }
}
