//! Nearest-neighbor reconstructors.

use crate::error::{Error, Result};
use crate::flow_engine::hermitian_project;
use crate::scene_sim::CovarianceMap;
use crate::tensor::Grid;

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_POWER: f64 = 2.0;

/// Inverse-distance weighted mean of the `k` nearest observed pixels. The
/// low-res sample `(i, j)` sits at full-res pixel `(i·H/h, j·W/w)`.
pub fn knn_reconstruct_a(y: &Grid, height: usize, width: usize, k: usize) -> Result<Grid> {
    knn_reconstruct_a_with(y, height, width, k, DEFAULT_POWER)
}

pub fn knn_reconstruct_a_with(y: &Grid, height: usize, width: usize, k: usize, power: f64) -> Result<Grid> {
    if k == 0 {
        return Err(Error::config("k must be >= 1"));
    }
    if y.height == 0 || y.width == 0 || height % y.height != 0 || width % y.width != 0 {
        return Err(Error::shape(format!(
            "{}x{} observation does not tile a {height}x{width} map",
            y.height, y.width
        )));
    }
    let (sr, sc) = (height / y.height, width / y.width);
    let k = k.min(y.data.len());
    let points: Vec<(f64, f64, f32)> = (0..y.height)
        .flat_map(|i| (0..y.width).map(move |j| (i, j)))
        .map(|(i, j)| ((i * sr) as f64, (j * sc) as f64, y.get(i, j)))
        .collect();
    let mut out = Grid::filled(height, width, 0.0);
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(points.len());
    for r in 0..height {
        for c in 0..width {
            dists.clear();
            dists.extend(
                points
                    .iter()
                    .enumerate()
                    .map(|(idx, &(pr, pc, _))| ((pr - r as f64).hypot(pc - c as f64), idx)),
            );
            // Index order breaks distance ties deterministically.
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let v = if dists[0].0 == 0.0 {
                points[dists[0].1].2 as f64
            } else {
                let (mut num, mut den) = (0.0, 0.0);
                for &(d, idx) in &dists[..k] {
                    let w = d.powf(-power);
                    num += w * points[idx].2 as f64;
                    den += w;
                }
                num / den
            };
            out.set(r, c, v as f32);
        }
    }
    Ok(out)
}

/// Mean of the neighbor covariances, projected onto Hermitian matrices.
pub fn knn_reconstruct_b(neighbors: &[CovarianceMap]) -> Result<CovarianceMap> {
    let first = neighbors
        .first()
        .ok_or_else(|| Error::config("at least one neighbor required"))?;
    let n = first.n;
    let mut real = vec![0.0f64; n * n];
    let mut imag = vec![0.0f64; n * n];
    for nb in neighbors {
        if nb.n != n {
            return Err(Error::shape("neighbors differ in size"));
        }
        for i in 0..n * n {
            real[i] += nb.real[i] as f64;
            imag[i] += nb.imag[i] as f64;
        }
    }
    let k = neighbors.len() as f64;
    let mean = CovarianceMap {
        n,
        real: real.iter().map(|v| (v / k) as f32).collect(),
        imag: imag.iter().map(|v| (v / k) as f32).collect(),
        location: first.location,
    };
    hermitian_project(&mean)
}
