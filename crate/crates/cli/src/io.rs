//! Files written and read by the CLI: prediction records, PGM previews,
//! manifests and hashes.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ckmflow::flow_engine::{clamp_for_export, Reconstruction};
use ckmflow::rng::mix64;
use ckmflow::scene_sim::{CovarianceMap, Task};
use ckmflow::tensor::Grid;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const PRED_MAGIC: &[u8; 4] = b"CKMP";
pub const PRED_VERSION: u32 = 1;
const SPLIT_SALT: u64 = 0x5B11_7000;

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One record in ten, chosen by a hash of its index, is held out.
pub fn is_test_index(index: usize) -> bool {
    mix64(index as u64 ^ SPLIT_SALT) % 10 == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    All,
}

pub fn split_indices(n: usize, split: Split) -> Vec<usize> {
    (0..n)
        .filter(|&i| match split {
            Split::Train => !is_test_index(i),
            Split::Test => is_test_index(i),
            Split::All => true,
        })
        .collect()
}

pub fn pred_file_name(index: usize) -> String {
    format!("rec_{index:06}.bin")
}

fn put_u32(w: &mut impl Write, v: usize) -> CliResult<()> {
    let v = u32::try_from(v).map_err(|_| CliError::Data("value exceeds u32".into()))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f32s(w: &mut impl Write, v: &[f32]) -> CliResult<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// `CKMP`, `u32` version, `u8` task tag, `u32` record index, then either
/// `u32 H, u32 W` and `H·W` values, or `u32 n, u32 row, u32 col` and the
/// real and imaginary planes.
pub fn write_prediction(path: &Path, index: usize, r: &Reconstruction) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(PRED_MAGIC)?;
    w.write_all(&PRED_VERSION.to_le_bytes())?;
    w.write_all(&[r.task().tag()])?;
    put_u32(&mut w, index)?;
    match r {
        Reconstruction::A(g) => {
            put_u32(&mut w, g.height)?;
            put_u32(&mut w, g.width)?;
            put_f32s(&mut w, &g.data)?;
        }
        Reconstruction::B(m) => {
            put_u32(&mut w, m.n)?;
            put_u32(&mut w, m.location.0)?;
            put_u32(&mut w, m.location.1)?;
            put_f32s(&mut w, &m.real)?;
            put_f32s(&mut w, &m.imag)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_prediction(path: &Path) -> CliResult<(usize, Reconstruction)> {
    let bad = |m: &str| CliError::Data(format!("{}: {m}", path.display()));
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> CliResult<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated prediction"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != PRED_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes([s[0], s[1], s[2], s[3]]) as usize;
    if u32_at(take(4)?) != PRED_VERSION as usize {
        return Err(bad("unsupported version"));
    }
    let task = Task::from_tag(take(1)?[0]).map_err(|e| bad(&e.to_string()))?;
    let index = u32_at(take(4)?);
    let floats = |s: &[u8]| -> Vec<f32> {
        s.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    };
    let r = match task {
        Task::A => {
            let h = u32_at(take(4)?);
            let w = u32_at(take(4)?);
            let data = floats(take(h * w * 4)?);
            Reconstruction::A(Grid::new(h, w, data).map_err(|e| bad(&e.to_string()))?)
        }
        Task::B => {
            let n = u32_at(take(4)?);
            let row = u32_at(take(4)?);
            let col = u32_at(take(4)?);
            let real = floats(take(n * n * 4)?);
            let imag = floats(take(n * n * 4)?);
            Reconstruction::B(CovarianceMap {
                n,
                real,
                imag,
                location: (row, col),
            })
        }
    };
    if take(1).is_ok() {
        return Err(bad("trailing bytes"));
    }
    Ok((index, r))
}

/// 8-bit binary PGM preview: gain maps clamped to 0–255, covariance
/// magnitudes scaled by their maximum.
pub fn write_pgm(path: &Path, r: &Reconstruction) -> CliResult<()> {
    let (h, w, pixels): (usize, usize, Vec<u8>) = match r {
        Reconstruction::A(g) => {
            let c = clamp_for_export(g);
            (c.height, c.width, c.data.iter().map(|v| v.round() as u8).collect())
        }
        Reconstruction::B(m) => {
            let mag = m.magnitude();
            let max = mag.iter().fold(0.0f32, |a, &b| a.max(b));
            let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
            (m.n, m.n, mag.iter().map(|v| (v * scale).round().clamp(0.0, 255.0) as u8).collect())
        }
    };
    let file = BufWriter::new(File::create(path)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&pixels, w as u32, h as u32, ExtendedColorType::L8)
        .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
}

/// Written next to predictions so that evaluation knows what to expect.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PredManifest {
    pub method: String,
    pub task: Task,
    pub dataset_sha256: String,
    pub indices: Vec<usize>,
    pub steps: Option<usize>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(path: &Path) -> CliResult<PathBuf> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}
