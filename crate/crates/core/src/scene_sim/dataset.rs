//! Binary dataset container.
//!
//! Layout (little-endian): magic `CKMF`, `u32` version, `u8` task tag
//! (0 = gain maps, 1 = covariances), `u64` record count, then the dims
//! header as `u32`s: `H, W` for gain maps or `N_t, K, spacing` for
//! covariances. Records follow as contiguous `f32` payloads:
//!
//! - gain map: `H·W` quantized values (0–255) then `H·W` oracle outdoor mask;
//! - covariance: target `(row, col)`, target real plane, target imaginary
//!   plane, then each ring neighbor's real and imaginary planes in ring order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gain::{compute_gain_map, PropagationParams};
use super::scene::{generate_scene, Scene, SceneConfig};
use super::scm::{compute_scm, ring_offsets, CovarianceMap, RING_SIZE};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};
use crate::tensor::Grid;

pub const DATASET_MAGIC: &[u8; 4] = b"CKMF";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    A,
    B,
}

impl Task {
    pub fn tag(self) -> u8 {
        match self {
            Task::A => 0,
            Task::B => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Task::A),
            1 => Ok(Task::B),
            t => Err(Error::format(format!("unknown task tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::A => "a",
            Task::B => "b",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub scene: SceneConfig,
    pub propagation: PropagationParams,
    /// Pixel distance between a covariance target and its ring neighbors.
    pub ring_spacing: usize,
    /// Fresh scenes tried per record before giving up.
    pub max_scene_attempts: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            propagation: PropagationParams::default(),
            ring_spacing: 2,
            max_scene_attempts: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetDims {
    A {
        height: usize,
        width: usize,
    },
    B {
        n_antennas: usize,
        k: usize,
        spacing: usize,
    },
}

impl DatasetDims {
    pub fn task(&self) -> Task {
        match self {
            DatasetDims::A { .. } => Task::A,
            DatasetDims::B { .. } => Task::B,
        }
    }

    fn record_floats(&self) -> usize {
        match *self {
            DatasetDims::A { height, width } => 2 * height * width,
            DatasetDims::B { n_antennas, k, .. } => 2 + 2 * n_antennas * n_antennas * (k + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordA {
    /// Quantized gain map on the 0–255 scale.
    pub target: Grid,
    /// 1 outdoors, 0 inside buildings.
    pub oracle_mask: Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordB {
    pub target: CovarianceMap,
    /// Ring neighbors in `RingDirection::ALL` order.
    pub neighbors: Vec<CovarianceMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    A(Vec<RecordA>),
    B(Vec<RecordB>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dims: DatasetDims,
    pub records: Records,
}

fn scene_attempts(
    seed: u64,
    index: u64,
    cfg: &GenerateConfig,
) -> impl Iterator<Item = Result<Scene>> + '_ {
    (0..cfg.max_scene_attempts as u64).map(move |attempt| {
        generate_scene(derive_seed(seed, &[index, attempt]), &cfg.scene)
    })
}

pub fn generate_record_a(index: u64, seed: u64, cfg: &GenerateConfig) -> Result<(RecordA, Scene)> {
    let mut last_err = None;
    for scene in scene_attempts(seed, index, cfg) {
        let scene = match scene {
            Ok(s) => s,
            Err(e @ Error::Placement { .. }) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let gain = compute_gain_map(&scene, &cfg.propagation)?;
        let record = RecordA {
            target: gain.quantized_grid(),
            oracle_mask: Grid::new(scene.height_px, scene.width_px, scene.outdoor_mask())?,
        };
        return Ok((record, scene));
    }
    Err(last_err.unwrap_or(Error::Placement {
        tries: cfg.scene.max_tries,
    }))
}

fn ring_location(scene: &Scene, loc: (usize, usize), spacing: usize) -> Option<[(usize, usize); RING_SIZE]> {
    let mut out = [(0, 0); RING_SIZE];
    for (slot, (dr, dc)) in out.iter_mut().zip(ring_offsets(spacing)) {
        let r = loc.0 as isize + dr;
        let c = loc.1 as isize + dc;
        if r < 0 || c < 0 || r >= scene.height_px as isize || c >= scene.width_px as isize {
            return None;
        }
        let (r, c) = (r as usize, c as usize);
        if scene.is_indoor(r, c) {
            return None;
        }
        *slot = (r, c);
    }
    Some(out)
}

/// One covariance record: target location drawn uniformly among outdoor
/// pixels whose whole ring is in bounds and outdoors. Scenes without such a
/// pixel are skipped and resampled.
pub fn generate_record_b(index: u64, seed: u64, cfg: &GenerateConfig) -> Result<(RecordB, Scene)> {
    for scene in scene_attempts(seed, index, cfg) {
        let scene = match scene {
            Ok(s) => s,
            Err(Error::Placement { .. }) => continue,
            Err(e) => return Err(e),
        };
        let mut rng = rng_for(scene.rng_seed, &[0x10C]);
        for _ in 0..cfg.scene.max_tries {
            let loc = (
                rng.random_range(0..scene.height_px),
                rng.random_range(0..scene.width_px),
            );
            if scene.is_indoor(loc.0, loc.1) {
                continue;
            }
            let Some(ring) = ring_location(&scene, loc, cfg.ring_spacing) else {
                continue;
            };
            let target = compute_scm(&scene, loc, &cfg.propagation)?;
            let neighbors = ring
                .iter()
                .map(|&q| compute_scm(&scene, q, &cfg.propagation))
                .collect::<Result<Vec<_>>>()?;
            return Ok((RecordB { target, neighbors }, scene));
        }
    }
    Err(Error::config(format!(
        "no outdoor target with a complete neighbor ring after {} scenes",
        cfg.max_scene_attempts
    )))
}

/// Generate `n_records` records. Each record is a pure function of
/// `(seed, index)`, so generation parallelizes without changing the output.
pub fn generate_dataset(task: Task, n_records: usize, seed: u64, cfg: &GenerateConfig) -> Result<Dataset> {
    if n_records == 0 {
        return Err(Error::config("n_records must be >= 1"));
    }
    cfg.scene.validate()?;
    cfg.propagation.validate()?;
    match task {
        Task::A => {
            let records = (0..n_records as u64)
                .into_par_iter()
                .map(|i| generate_record_a(i, seed, cfg).map(|(r, _)| r))
                .collect::<Result<Vec<_>>>()?;
            Ok(Dataset {
                dims: DatasetDims::A {
                    height: cfg.scene.height_px,
                    width: cfg.scene.width_px,
                },
                records: Records::A(records),
            })
        }
        Task::B => {
            if cfg.ring_spacing == 0 {
                return Err(Error::config("ring_spacing must be >= 1"));
            }
            let records = (0..n_records as u64)
                .into_par_iter()
                .map(|i| generate_record_b(i, seed, cfg).map(|(r, _)| r))
                .collect::<Result<Vec<_>>>()?;
            Ok(Dataset {
                dims: DatasetDims::B {
                    n_antennas: cfg.scene.n_antennas,
                    k: RING_SIZE,
                    spacing: cfg.ring_spacing,
                },
                records: Records::B(records),
            })
        }
    }
}

impl Dataset {
    pub fn task(&self) -> Task {
        self.dims.task()
    }

    pub fn len(&self) -> usize {
        match &self.records {
            Records::A(r) => r.len(),
            Records::B(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records_a(&self) -> Result<&[RecordA]> {
        match &self.records {
            Records::A(r) => Ok(r),
            Records::B(_) => Err(Error::format("expected a gain-map dataset, found covariances")),
        }
    }

    pub fn records_b(&self) -> Result<&[RecordB]> {
        match &self.records {
            Records::B(r) => Ok(r),
            Records::A(_) => Err(Error::format("expected a covariance dataset, found gain maps")),
        }
    }

    /// Keep only the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let records = match &self.records {
            Records::A(r) => Records::A(indices.iter().map(|&i| r[i].clone()).collect()),
            Records::B(r) => Records::B(indices.iter().map(|&i| r[i].clone()).collect()),
        };
        Dataset {
            dims: self.dims,
            records,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&[self.task().tag()])?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        let dims: Vec<u32> = match self.dims {
            DatasetDims::A { height, width } => vec![height as u32, width as u32],
            DatasetDims::B {
                n_antennas,
                k,
                spacing,
            } => vec![n_antennas as u32, k as u32, spacing as u32],
        };
        for d in dims {
            w.write_all(&d.to_le_bytes())?;
        }
        let mut put = |vals: &[f32]| -> Result<()> {
            for v in vals {
                w.write_all(&v.to_le_bytes())?;
            }
            Ok(())
        };
        match &self.records {
            Records::A(recs) => {
                for r in recs {
                    put(&r.target.data)?;
                    put(&r.oracle_mask.data)?;
                }
            }
            Records::B(recs) => {
                for r in recs {
                    put(&[r.target.location.0 as f32, r.target.location.1 as f32])?;
                    put(&r.target.real)?;
                    put(&r.target.imag)?;
                    for nb in &r.neighbors {
                        put(&nb.real)?;
                        put(&nb.imag)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::format("bad dataset magic"));
        }
        let version = read_u32(&mut r)?;
        if version != DATASET_VERSION {
            return Err(Error::format(format!("unsupported dataset version {version}")));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let task = Task::from_tag(tag[0])?;
        let mut count = [0u8; 8];
        r.read_exact(&mut count)?;
        let count = u64::from_le_bytes(count) as usize;
        let dims = match task {
            Task::A => DatasetDims::A {
                height: read_u32(&mut r)? as usize,
                width: read_u32(&mut r)? as usize,
            },
            Task::B => DatasetDims::B {
                n_antennas: read_u32(&mut r)? as usize,
                k: read_u32(&mut r)? as usize,
                spacing: read_u32(&mut r)? as usize,
            },
        };
        let per = dims.record_floats();
        let mut payload = vec![0u8; per * 4];
        let mut floats = vec![0f32; per];
        fn next<R: Read>(r: &mut R, payload: &mut [u8], floats: &mut [f32]) -> Result<()> {
            r.read_exact(payload).map_err(|e| {
                if e.kind() == std::io::ErrorKind::UnexpectedEof {
                    Error::format("dataset truncated")
                } else {
                    e.into()
                }
            })?;
            for (f, b) in floats.iter_mut().zip(payload.chunks_exact(4)) {
                *f = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
            Ok(())
        }
        let records = match dims {
            DatasetDims::A { height, width } => {
                let hw = height * width;
                let mut recs = Vec::with_capacity(count);
                for _ in 0..count {
                    next(&mut r, &mut payload, &mut floats)?;
                    recs.push(RecordA {
                        target: Grid::new(height, width, floats[..hw].to_vec())?,
                        oracle_mask: Grid::new(height, width, floats[hw..].to_vec())?,
                    });
                }
                Records::A(recs)
            }
            DatasetDims::B {
                n_antennas: n,
                k,
                spacing,
            } => {
                if k != RING_SIZE {
                    return Err(Error::format(format!("expected {RING_SIZE} neighbors, header says {k}")));
                }
                let nn = n * n;
                let offsets = ring_offsets(spacing);
                let mut recs = Vec::with_capacity(count);
                for _ in 0..count {
                    next(&mut r, &mut payload, &mut floats)?;
                    let loc = (floats[0] as usize, floats[1] as usize);
                    let plane = |i: usize| floats[2 + i * nn..2 + (i + 1) * nn].to_vec();
                    let target = CovarianceMap {
                        n,
                        real: plane(0),
                        imag: plane(1),
                        location: loc,
                    };
                    let neighbors = (0..k)
                        .map(|j| CovarianceMap {
                            n,
                            real: plane(2 + 2 * j),
                            imag: plane(3 + 2 * j),
                            location: (
                                (loc.0 as isize + offsets[j].0) as usize,
                                (loc.1 as isize + offsets[j].1) as usize,
                            ),
                        })
                        .collect();
                    recs.push(RecordB { target, neighbors });
                }
                Records::B(recs)
            }
        };
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::format("trailing bytes after last record"));
        }
        Ok(Dataset { dims, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> GenerateConfig {
        GenerateConfig::default()
    }

    #[test]
    fn single_record_header() {
        let ds = generate_dataset(Task::A, 1, 3, &small_cfg()).unwrap();
        let bytes = ds.to_bytes();
        assert_eq!(&bytes[..4], b"CKMF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes[8], 0);
        assert_eq!(u64::from_le_bytes(bytes[9..17].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), 17 + 8 + 2 * 32 * 32 * 4);
    }

    #[test]
    fn same_seed_byte_identical() {
        let a = generate_dataset(Task::B, 3, 9, &small_cfg()).unwrap().to_bytes();
        let b = generate_dataset(Task::B, 3, 9, &small_cfg()).unwrap().to_bytes();
        assert_eq!(a, b);
        let c = generate_dataset(Task::B, 3, 10, &small_cfg()).unwrap().to_bytes();
        assert_ne!(a, c);
    }

    #[test]
    fn round_trip_both_tasks() {
        for task in [Task::A, Task::B] {
            let ds = generate_dataset(task, 4, 21, &small_cfg()).unwrap();
            let back = Dataset::read_from(&ds.to_bytes()[..]).unwrap();
            assert_eq!(back, ds);
        }
    }

    #[test]
    fn zero_records_rejected() {
        assert!(generate_dataset(Task::A, 0, 1, &small_cfg()).is_err());
    }

    #[test]
    fn truncated_and_corrupt_files_rejected() {
        let bytes = generate_dataset(Task::A, 2, 1, &small_cfg()).unwrap().to_bytes();
        assert!(Dataset::read_from(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Dataset::read_from(&bad[..]).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Dataset::read_from(&extra[..]).is_err());
    }

    #[test]
    fn covariance_targets_are_valid() {
        let ds = generate_dataset(Task::B, 100, 4, &small_cfg()).unwrap();
        for rec in ds.records_b().unwrap() {
            let r = &rec.target;
            assert_eq!(r.hermitian_error(), 0.0);
            let tr = r.trace();
            let min_ev = r.eigenvalues()[0];
            assert!(min_ev >= -1e-6 * tr, "min eigenvalue {min_ev}");
            for nb in &rec.neighbors {
                assert_eq!(nb.hermitian_error(), 0.0);
            }
        }
    }

    #[test]
    fn oracle_mask_matches_floor_pixels() {
        let ds = generate_dataset(Task::A, 5, 2, &small_cfg()).unwrap();
        for rec in ds.records_a().unwrap() {
            for (m, v) in rec.oracle_mask.data.iter().zip(&rec.target.data) {
                if *m == 0.0 {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }
}
