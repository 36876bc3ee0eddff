use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::gain::PropagationParams;
use super::scene::Scene;
use crate::error::{Error, Result};

/// Half-wavelength ULA response, `a[n] = exp(iπ n sin θ)`.
pub fn steering_vector(theta: f64, n_antennas: usize) -> Vec<Complex64> {
    let s = theta.sin();
    (0..n_antennas)
        .map(|n| Complex64::from_polar(1.0, PI * n as f64 * s))
        .collect()
}

/// Spatial covariance at one grid location, stored as real and imaginary
/// planes (row-major `n × n`).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMap {
    pub n: usize,
    pub real: Vec<f32>,
    pub imag: Vec<f32>,
    pub location: (usize, usize),
}

impl CovarianceMap {
    pub fn from_complex(n: usize, entries: &[Complex64], location: (usize, usize)) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::shape(format!("{} entries for a {n}x{n} matrix", entries.len())));
        }
        Ok(Self {
            n,
            real: entries.iter().map(|z| z.re as f32).collect(),
            imag: entries.iter().map(|z| z.im as f32).collect(),
            location,
        })
    }

    pub fn identity(n: usize, location: (usize, usize)) -> Self {
        let mut real = vec![0.0; n * n];
        for i in 0..n {
            real[i * n + i] = 1.0;
        }
        Self {
            n,
            real,
            imag: vec![0.0; n * n],
            location,
        }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.real
            .iter()
            .zip(&self.imag)
            .map(|(&re, &im)| Complex64::new(re as f64, im as f64))
            .collect()
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.n, self.n, &self.to_complex())
    }

    /// `max |R − Rᴴ|` over entries.
    pub fn hermitian_error(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let a = Complex64::new(self.real[i * n + j] as f64, self.imag[i * n + j] as f64);
                let b = Complex64::new(self.real[j * n + i] as f64, -(self.imag[j * n + i] as f64));
                worst = worst.max((a - b).norm());
            }
        }
        worst
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.real[i * self.n + i] as f64).sum()
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = self.to_matrix();
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    /// Elementwise magnitude.
    pub fn magnitude(&self) -> Vec<f32> {
        self.real
            .iter()
            .zip(&self.imag)
            .map(|(re, im)| re.hypot(*im))
            .collect()
    }
}

/// Neighbor ring positions in their fixed channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingDirection {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

pub const RING_SIZE: usize = 8;

impl RingDirection {
    pub const ALL: [RingDirection; RING_SIZE] = [
        RingDirection::N,
        RingDirection::NE,
        RingDirection::E,
        RingDirection::SE,
        RingDirection::S,
        RingDirection::SW,
        RingDirection::W,
        RingDirection::NW,
    ];

    /// Unit (row, col) step; north is decreasing row.
    pub fn unit_offset(self) -> (isize, isize) {
        match self {
            RingDirection::N => (-1, 0),
            RingDirection::NE => (-1, 1),
            RingDirection::E => (0, 1),
            RingDirection::SE => (1, 1),
            RingDirection::S => (1, 0),
            RingDirection::SW => (1, -1),
            RingDirection::W => (0, -1),
            RingDirection::NW => (-1, -1),
        }
    }
}

/// Ring offsets scaled by `spacing`, in channel order.
pub fn ring_offsets(spacing: usize) -> [(isize, isize); RING_SIZE] {
    RingDirection::ALL.map(|d| {
        let (r, c) = d.unit_offset();
        (r * spacing as isize, c * spacing as isize)
    })
}

/// Angle of the direction `from → to` relative to array broadside (+row).
fn direction_angle(from: (f64, f64), to: (f64, f64)) -> f64 {
    (to.1 - from.1).atan2(to.0 - from.0)
}

/// Expected covariance of a multipath channel with independent uniform path
/// phases: `R = Σ p_l a(θ_l) a(θ_l)ᴴ`, trace normalized to `n_antennas`.
pub fn compute_scm(
    scene: &Scene,
    loc: (usize, usize),
    p: &PropagationParams,
) -> Result<CovarianceMap> {
    if loc.0 >= scene.height_px || loc.1 >= scene.width_px {
        return Err(Error::config(format!("location {loc:?} outside the grid")));
    }
    if scene.is_indoor(loc.0, loc.1) {
        return Err(Error::IndoorLocation {
            row: loc.0,
            col: loc.1,
        });
    }
    p.validate()?;
    let n = scene.n_antennas;
    let center = (loc.0 as f64 + 0.5, loc.1 as f64 + 0.5);
    let bs = (scene.bs_pos.0 as f64 + 0.5, scene.bs_pos.1 as f64 + 0.5);
    let theta0 = direction_angle(bs, center);

    let mut corners: Vec<(f64, f64)> = scene.buildings.iter().flat_map(|b| b.corners()).collect();
    corners.sort_by(|a, b| {
        let da = (a.0 - center.0).hypot(a.1 - center.1);
        let db = (b.0 - center.0).hypot(b.1 - center.1);
        da.partial_cmp(&db)
            .unwrap()
            .then(a.0.partial_cmp(&b.0).unwrap())
            .then(a.1.partial_cmp(&b.1).unwrap())
    });
    corners.dedup();

    let thetas: Vec<f64> = (0..p.n_paths)
        .map(|l| match l {
            0 => theta0,
            l => match corners.get(l - 1) {
                Some(&corner) => direction_angle(corner, center),
                None => theta0 + 0.05 * l as f64,
            },
        })
        .collect();
    let raw: Vec<f64> = (0..p.n_paths).map(|l| p.path_decay.powi(l as i32)).collect();
    let total: f64 = raw.iter().sum();

    // R[m][k] = Σ_l p_l exp(iπ(m−k) sin θ_l); fill the upper triangle and mirror.
    let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
    for m in 0..n {
        entries[m * n + m] = Complex64::new(raw.iter().sum::<f64>() / total, 0.0);
        for k in m + 1..n {
            let lag = m as f64 - k as f64;
            let z: Complex64 = thetas
                .iter()
                .zip(&raw)
                .map(|(th, pw)| Complex64::from_polar(pw / total, PI * lag * th.sin()))
                .sum();
            entries[m * n + k] = z;
            entries[k * n + m] = z.conj();
        }
    }
    CovarianceMap::from_complex(n, &entries, loc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_sim::scene::Rect;

    fn scene_with(buildings: Vec<Rect>) -> Scene {
        Scene {
            height_px: 16,
            width_px: 16,
            cell_size: 1.0,
            bs_pos: (2, 3),
            n_antennas: 8,
            buildings,
            rng_seed: 0,
        }
    }

    #[test]
    fn steering_vector_cases() {
        for z in steering_vector(0.0, 6) {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        for z in steering_vector(0.7, 9) {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
        for (n, z) in steering_vector(PI / 2.0, 7).into_iter().enumerate() {
            let expect = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert!((z - Complex64::new(expect, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn single_path_is_rank_one_with_trace_n() {
        let s = scene_with(vec![]);
        let p = PropagationParams {
            n_paths: 1,
            ..Default::default()
        };
        let r = compute_scm(&s, (10, 12), &p).unwrap();
        assert!((r.trace() - 8.0).abs() < 1e-5);
        let ev = r.eigenvalues();
        assert!((ev[7] - 8.0).abs() < 1e-4);
        assert!(ev[..7].iter().all(|e| e.abs() < 1e-4));
        // matches a aᴴ for the LOS angle
        let theta = (12.5f64 - 3.5).atan2(10.5 - 2.5);
        let a = steering_vector(theta, 8);
        let got = r.to_complex();
        for i in 0..8 {
            for j in 0..8 {
                assert!((got[i * 8 + j] - a[i] * a[j].conj()).norm() < 1e-5);
            }
        }
    }

    #[test]
    fn output_exactly_hermitian() {
        let s = scene_with(vec![Rect {
            row0: 6,
            col0: 6,
            row1: 9,
            col1: 10,
        }]);
        let r = compute_scm(&s, (12, 1), &PropagationParams::default()).unwrap();
        assert_eq!(r.hermitian_error(), 0.0);
    }

    #[test]
    fn two_path_eigenvalues_match_gram_closed_form() {
        // The nonzero spectrum of p0 a0a0ᴴ + p1 a1a1ᴴ equals that of the 2x2
        // matrix [[p0 N, √(p0p1) a0ᴴa1], [conj, p1 N]].
        let s = scene_with(vec![Rect {
            row0: 10,
            col0: 10,
            row1: 12,
            col1: 12,
        }]);
        let p = PropagationParams {
            n_paths: 2,
            path_decay: 0.5,
            ..Default::default()
        };
        let loc = (14, 5);
        let r = compute_scm(&s, loc, &p).unwrap();
        let center = (14.5, 5.5);
        let th0 = (center.1 - 3.5f64).atan2(center.0 - 2.5);
        // nearest corner to (14.5, 5.5) is (12, 10)
        let th1 = (center.1 - 10.0f64).atan2(center.0 - 12.0);
        let (p0, p1) = (1.0 / 1.5, 0.5 / 1.5);
        let a0 = steering_vector(th0, 8);
        let a1 = steering_vector(th1, 8);
        let g: Complex64 = a0.iter().zip(&a1).map(|(x, y)| x.conj() * y).sum();
        let nn = 8.0;
        let tr = (p0 + p1) * nn;
        let det = p0 * p1 * (nn * nn - g.norm_sqr());
        let disc = (tr * tr / 4.0 - det).sqrt();
        let (l_hi, l_lo) = (tr / 2.0 + disc, tr / 2.0 - disc);

        let ev = r.eigenvalues();
        assert!((ev[7] - l_hi).abs() < 1e-4, "{} vs {l_hi}", ev[7]);
        assert!((ev[6] - l_lo).abs() < 1e-4, "{} vs {l_lo}", ev[6]);
        assert!(ev[..6].iter().all(|e| e.abs() < 1e-4));
    }

    #[test]
    fn missing_corners_perturb_los_angle() {
        let s = scene_with(vec![]);
        let p = PropagationParams {
            n_paths: 3,
            path_decay: 1.0,
            ..Default::default()
        };
        let r = compute_scm(&s, (9, 9), &p).unwrap();
        let th0 = (9.5f64 - 3.5).atan2(9.5 - 2.5);
        let mut expect = vec![Complex64::new(0.0, 0.0); 64];
        for l in 0..3 {
            let a = steering_vector(th0 + 0.05 * l as f64, 8);
            for i in 0..8 {
                for j in 0..8 {
                    expect[i * 8 + j] += a[i] * a[j].conj() / 3.0;
                }
            }
        }
        for (g, e) in r.to_complex().iter().zip(&expect) {
            assert!((g - e).norm() < 1e-5);
        }
    }

    #[test]
    fn indoor_location_rejected() {
        let s = scene_with(vec![Rect {
            row0: 6,
            col0: 6,
            row1: 9,
            col1: 10,
        }]);
        assert!(matches!(
            compute_scm(&s, (7, 7), &PropagationParams::default()),
            Err(Error::IndoorLocation { .. })
        ));
    }

    #[test]
    fn ring_offsets_in_compass_order() {
        let o = ring_offsets(2);
        assert_eq!(o[0], (-2, 0));
        assert_eq!(o[2], (0, 2));
        assert_eq!(o[4], (2, 0));
        assert_eq!(o[7], (-2, -2));
    }
}
