//! Matrix similarity: normalized magnitude of the Frobenius inner product.

use crate::error::{Error, Result};
use crate::scene_sim::CovarianceMap;

/// `|Tr(R R̂ᴴ)| / (‖R‖_F ‖R̂‖_F)`.
pub fn msi_one(r: &CovarianceMap, r_hat: &CovarianceMap) -> Result<f64> {
    if r.n != r_hat.n {
        return Err(Error::shape("matrices differ in size"));
    }
    let (mut re, mut im, mut n1, mut n2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..r.n * r.n {
        let (a, b) = (r.real[i] as f64, r.imag[i] as f64);
        let (c, d) = (r_hat.real[i] as f64, r_hat.imag[i] as f64);
        // (a + ib)(c − id)
        re += a * c + b * d;
        im += b * c - a * d;
        n1 += a * a + b * b;
        n2 += c * c + d * d;
    }
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroNorm("msi matrix".into()));
    }
    Ok((re.hypot(im) / (n1.sqrt() * n2.sqrt())).min(1.0))
}

/// Mean of [`msi_one`] over matched sets.
pub fn msi(rs: &[CovarianceMap], r_hats: &[CovarianceMap]) -> Result<f64> {
    if rs.len() != r_hats.len() || rs.is_empty() {
        return Err(Error::shape("msi needs matched, non-empty sets"));
    }
    let mut total = 0.0;
    for (a, b) in rs.iter().zip(r_hats) {
        total += msi_one(a, b)?;
    }
    Ok(total / rs.len() as f64)
}
