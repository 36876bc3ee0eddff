//! Parameter checkpoints.
//!
//! Layout (little-endian): magic `CKMW`, `u32` version, `u32` length plus a
//! JSON header `{"net": config, "meta": ...}`, `u32` slice count, then per
//! slice `u32` name length, name bytes, `u64` offset, `u32` rank and `u64`
//! dims; `u64` parameter count and raw `f32` values; finally a `u8` flag
//! followed, when set, by the Adam step (`u64`) and both moment vectors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::net::{VelocityNet, VelocityNetConfig};
use super::params::{ParamSlice, ParamStore};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CKMW";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_HEADER: usize = 1 << 24;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: VelocityNetConfig,
    /// Free-form run metadata (method, normalization stats, epoch, ...).
    pub meta: serde_json::Value,
    pub params: ParamStore<f32>,
    pub adam: Option<AdamState>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    net: VelocityNetConfig,
    meta: serde_json::Value,
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::format("value exceeds u32"))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f32s<W: Write>(w: &mut W, v: &[f32]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::format(format!("truncated checkpoint: {e}")))?;
    Ok(b)
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    Ok(u32::from_le_bytes(get(r)?) as usize)
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(get(r)?))
}

fn get_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::format(format!("truncated checkpoint: {e}")))?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let header = serde_json::to_vec(&Header {
            net: self.net,
            meta: self.meta.clone(),
        })?;
        put_u32(&mut w, header.len())?;
        w.write_all(&header)?;
        let layout = self.params.layout();
        put_u32(&mut w, layout.len())?;
        for s in layout {
            put_u32(&mut w, s.name.len())?;
            w.write_all(s.name.as_bytes())?;
            put_u64(&mut w, s.offset as u64)?;
            put_u32(&mut w, s.shape.len())?;
            for &d in &s.shape {
                put_u64(&mut w, d as u64)?;
            }
        }
        put_u64(&mut w, self.params.len() as u64)?;
        put_f32s(&mut w, self.params.values())?;
        match &self.adam {
            None => w.write_all(&[0])?,
            Some(a) => {
                w.write_all(&[1])?;
                put_u64(&mut w, a.step)?;
                put_f32s(&mut w, &a.m)?;
                put_f32s(&mut w, &a.v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        if &get::<4, _>(&mut r)? != CHECKPOINT_MAGIC {
            return Err(Error::format("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(get(&mut r)?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {version}")));
        }
        let hlen = get_u32(&mut r)?;
        if hlen > MAX_HEADER {
            return Err(Error::format("checkpoint header too large"));
        }
        let mut hbuf = vec![0u8; hlen];
        r.read_exact(&mut hbuf)
            .map_err(|e| Error::format(format!("truncated checkpoint: {e}")))?;
        let header: Header = serde_json::from_slice(&hbuf)?;
        let n_slices = get_u32(&mut r)?;
        let mut layout = Vec::with_capacity(n_slices.min(4096));
        for _ in 0..n_slices {
            let nlen = get_u32(&mut r)?;
            if nlen > 4096 {
                return Err(Error::format("slice name too long"));
            }
            let mut name = vec![0u8; nlen];
            r.read_exact(&mut name)
                .map_err(|e| Error::format(format!("truncated checkpoint: {e}")))?;
            let name = String::from_utf8(name).map_err(|_| Error::format("slice name not UTF-8"))?;
            let offset = get_u64(&mut r)? as usize;
            let rank = get_u32(&mut r)?;
            if rank > 8 {
                return Err(Error::format("slice rank too large"));
            }
            let shape = (0..rank)
                .map(|_| get_u64(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            layout.push(ParamSlice { name, offset, shape });
        }
        let n = get_u64(&mut r)? as usize;
        let expected: usize = layout.iter().map(|s| s.len()).sum();
        if n != expected {
            return Err(Error::format(format!("{n} parameters but layout needs {expected}")));
        }
        let values = get_f32s(&mut r, n)?;
        let params = ParamStore::from_parts(layout, values)?;
        VelocityNet::new(header.net)?.check_store(&params)?;
        let adam = match get::<1, _>(&mut r)?[0] {
            0 => None,
            1 => {
                let step = get_u64(&mut r)?;
                let m = get_f32s(&mut r, n)?;
                let v = get_f32s(&mut r, n)?;
                Some(AdamState { m, v, step })
            }
            f => return Err(Error::format(format!("bad optimizer flag {f}"))),
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::format("trailing bytes after checkpoint"));
        }
        Ok(Self {
            net: header.net,
            meta: header.meta,
            params,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
