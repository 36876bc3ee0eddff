//! Hermitian symmetrization of reconstructed covariances.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scene_sim::CovarianceMap;

/// `½(R + Rᴴ)`, the Frobenius-nearest Hermitian matrix.
pub fn hermitian_project_matrix(r: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if !r.is_square() {
        return Err(Error::shape(format!("{}x{} matrix is not square", r.nrows(), r.ncols())));
    }
    let n = r.nrows();
    let mut out = r.clone();
    for i in 0..n {
        out[(i, i)] = Complex64::new(r[(i, i)].re, 0.0);
        for j in i + 1..n {
            let v = (r[(i, j)] + r[(j, i)].conj()) * 0.5;
            out[(i, j)] = v;
            out[(j, i)] = v.conj();
        }
    }
    Ok(out)
}

/// Project an f32 covariance. The mirror is written explicitly so the result
/// is exactly Hermitian after rounding.
pub fn hermitian_project(r: &CovarianceMap) -> Result<CovarianceMap> {
    let n = r.n;
    if r.real.len() != n * n || r.imag.len() != n * n {
        return Err(Error::shape("covariance planes are not n×n"));
    }
    let mut out = r.clone();
    for i in 0..n {
        out.imag[i * n + i] = 0.0;
        for j in i + 1..n {
            let re = 0.5 * (r.real[i * n + j] + r.real[j * n + i]);
            let im = 0.5 * (r.imag[i * n + j] - r.imag[j * n + i]);
            out.real[i * n + j] = re;
            out.real[j * n + i] = re;
            out.imag[i * n + j] = im;
            out.imag[j * n + i] = -im;
        }
    }
    Ok(out)
}

/// Replace negative eigenvalues of a Hermitian matrix by zero.
pub fn psd_clip(r: &CovarianceMap) -> Result<CovarianceMap> {
    let h = hermitian_project(r)?;
    let eig = h.to_matrix().symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0), 0.0));
    let q = &eig.eigenvectors;
    let rec = q * DMatrix::from_diagonal(&vals) * q.adjoint();
    let entries: Vec<Complex64> = (0..h.n)
        .flat_map(|i| (0..h.n).map(move |j| (i, j)))
        .map(|(i, j)| rec[(i, j)])
        .collect();
    hermitian_project(&CovarianceMap::from_complex(h.n, &entries, h.location)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng as _;

    fn random(n: usize, seed: u64) -> CovarianceMap {
        let mut rng = rng_for(seed, &[]);
        CovarianceMap {
            n,
            real: (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            imag: (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            location: (0, 0),
        }
    }

    #[test]
    fn hand_example() {
        let r = DMatrix::from_row_slice(
            2,
            2,
            &[0.0, 2.0, 0.0, 0.0].map(|v| Complex64::new(v, 0.0)),
        );
        let p = hermitian_project_matrix(&r).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0].map(|v| Complex64::new(v, 0.0)));
        assert_eq!(p, want);
    }

    #[test]
    fn exact_and_idempotent() {
        let r = random(8, 1);
        let p = hermitian_project(&r).unwrap();
        assert_eq!(p.hermitian_error(), 0.0);
        assert_eq!(hermitian_project(&p).unwrap(), p);
    }

    #[test]
    fn nearest_in_frobenius_norm() {
        // R − P is anti-Hermitian, hence orthogonal to every Hermitian H − P.
        let r = random(4, 2).to_matrix();
        let p = hermitian_project_matrix(&r).unwrap();
        let d0 = (&r - &p).norm();
        for s in 0..20 {
            let h = hermitian_project_matrix(&random(4, 100 + s).to_matrix()).unwrap() * Complex64::new(0.1, 0.0);
            let q = &p + h;
            assert!((&r - q).norm() >= d0 - 1e-12);
        }
    }

    #[test]
    fn non_square_rejected() {
        let r = DMatrix::<Complex64>::zeros(2, 3);
        assert!(hermitian_project_matrix(&r).is_err());
    }

    #[test]
    fn psd_clip_removes_negative_eigenvalues() {
        let c = psd_clip(&random(6, 3)).unwrap();
        assert_eq!(c.hermitian_error(), 0.0);
        assert!(c.eigenvalues().iter().all(|&v| v > -1e-5));
    }
}
