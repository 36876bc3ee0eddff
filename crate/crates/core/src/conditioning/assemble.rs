use super::interp::upsample_bicubic;
use super::morphology::{extract_edges, extract_mask};
use crate::error::{Error, Result};
use crate::scene_sim::{CovarianceMap, RING_SIZE};
use crate::tensor::{Grid, Tensor};

/// `[upsampled observation, outdoor mask, edge map]`, each `H × W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionTensorA(pub Tensor);

/// `2K × N_t × N_t`: neighbor `k` fills channels `2k` (real) and `2k + 1`
/// (imaginary).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionTensorB(pub Tensor);

/// Where the outdoor mask comes from.
#[derive(Debug, Clone, Copy)]
pub enum MaskSource<'a> {
    /// Thresholded from the upsampled observation.
    Estimated { tau_b: f32 },
    /// Read from scene geometry.
    Oracle(&'a Grid),
}

pub fn assemble_condition_a(
    y: &Grid,
    height: usize,
    width: usize,
    mask: MaskSource<'_>,
) -> Result<ConditionTensorA> {
    let y_up = upsample_bicubic(y, height, width);
    let m = match mask {
        MaskSource::Estimated { tau_b } => extract_mask(&y_up, tau_b),
        MaskSource::Oracle(m) => {
            if m.height != height || m.width != width {
                return Err(Error::shape(format!(
                    "oracle mask {}x{} for a {height}x{width} target",
                    m.height, m.width
                )));
            }
            m.clone()
        }
    };
    let e = extract_edges(&m);
    let mut data = y_up.data;
    data.extend_from_slice(&m.data);
    data.extend_from_slice(&e.data);
    Ok(ConditionTensorA(Tensor::from_vec(3, height, width, data)?))
}

/// Stack ring neighbors given in `RingDirection::ALL` order.
pub fn assemble_condition_b(neighbors: &[CovarianceMap]) -> Result<ConditionTensorB> {
    if neighbors.len() != RING_SIZE {
        return Err(Error::shape(format!(
            "expected {RING_SIZE} neighbors, got {}",
            neighbors.len()
        )));
    }
    let n = neighbors[0].n;
    let mut data = Vec::with_capacity(2 * RING_SIZE * n * n);
    for nb in neighbors {
        if nb.n != n || nb.real.len() != n * n || nb.imag.len() != n * n {
            return Err(Error::shape(format!(
                "neighbor at {:?} is not {n}x{n}",
                nb.location
            )));
        }
        data.extend_from_slice(&nb.real);
        data.extend_from_slice(&nb.imag);
    }
    Ok(ConditionTensorB(Tensor::from_vec(2 * RING_SIZE, n, n, data)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::{degrade, DegradationConfig, DEFAULT_TAU_B};
    use crate::scene_sim::{generate_record_a, GenerateConfig};

    #[test]
    fn gain_condition_shape_and_channels() {
        let (rec, scene) = generate_record_a(0, 1, &GenerateConfig::default()).unwrap();
        let y = degrade(&rec.target, &DegradationConfig::default().for_record(0)).unwrap();
        let c = assemble_condition_a(&y, 32, 32, MaskSource::Estimated { tau_b: DEFAULT_TAU_B })
            .unwrap()
            .0;
        assert_eq!(c.shape(), (3, 32, 32));
        assert_eq!(c.channel(0), &upsample_bicubic(&y, 32, 32).data[..]);
        assert!(c.data[32 * 32..].iter().all(|&v| v == 0.0 || v == 1.0));

        let oracle = Grid::new(32, 32, scene.outdoor_mask()).unwrap();
        let c = assemble_condition_a(&y, 32, 32, MaskSource::Oracle(&oracle)).unwrap().0;
        assert_eq!(c.channel(1), &oracle.data[..]);
        for r in 0..32 {
            for col in 0..32 {
                assert_eq!(c[(1, r, col)] == 0.0, scene.is_indoor(r, col));
            }
        }
        assert_eq!(c.channel(2), &extract_edges(&oracle).data[..]);
    }

    #[test]
    fn covariance_condition_layout() {
        let ring: Vec<CovarianceMap> = (0..8).map(|_| CovarianceMap::identity(8, (0, 0))).collect();
        let c = assemble_condition_b(&ring).unwrap().0;
        assert_eq!(c.shape(), (16, 8, 8));
        for k in 0..8 {
            let re = c.channel(2 * k);
            let im = c.channel(2 * k + 1);
            for i in 0..8 {
                for j in 0..8 {
                    assert_eq!(re[i * 8 + j], if i == j { 1.0 } else { 0.0 });
                    assert_eq!(im[i * 8 + j], 0.0);
                }
            }
        }
    }

    #[test]
    fn neighbor_order_is_positional() {
        let ring: Vec<CovarianceMap> = (0..8)
            .map(|k| {
                let mut m = CovarianceMap::identity(4, (0, 0));
                m.real[1] = k as f32;
                m.imag[1] = -(k as f32);
                m
            })
            .collect();
        let c = assemble_condition_b(&ring).unwrap().0;
        let mut swapped = ring.clone();
        swapped.swap(1, 5);
        let d = assemble_condition_b(&swapped).unwrap().0;
        assert_ne!(c, d);
        assert_eq!(c.channel(2), d.channel(10));
        assert_eq!(c.channel(11), d.channel(3));
        assert_eq!(c.channel(0), d.channel(0));
    }

    #[test]
    fn wrong_neighbor_count_or_shape_rejected() {
        let ring: Vec<CovarianceMap> = (0..7).map(|_| CovarianceMap::identity(8, (0, 0))).collect();
        assert!(assemble_condition_b(&ring).is_err());
        let mut ring: Vec<CovarianceMap> = (0..8).map(|_| CovarianceMap::identity(8, (0, 0))).collect();
        ring[3] = CovarianceMap::identity(4, (0, 0));
        assert!(assemble_condition_b(&ring).is_err());
    }
}
