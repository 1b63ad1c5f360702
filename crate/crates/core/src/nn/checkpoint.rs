//! `NNC1` parameter files: magic, shape table, little-endian f64 payload.
//!
//! ```text
//! b"NNC1" | u32 tensor_count | (u32 rows, u32 cols) * count | f64 * sum(rows*cols)
//! ```

use std::fs;
use std::path::Path;

use super::{Matrix, Parameterized};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NNC1";

pub fn encode(tensors: &[&Matrix]) -> Vec<u8> {
    let payload: usize = tensors.iter().map(|t| t.len()).sum();
    let mut out = Vec::with_capacity(8 + 8 * tensors.len() + 8 * payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
    }
    for t in tensors {
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Matrix>> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing NNC1 magic"));
    }
    let u32_at = |i: usize| -> Result<u32> {
        bytes
            .get(i..i + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| bad("truncated shape table"))
    };
    let count = u32_at(4)? as usize;
    let mut shapes = Vec::with_capacity(count);
    let mut pos = 8;
    for _ in 0..count {
        shapes.push((u32_at(pos)? as usize, u32_at(pos + 4)? as usize));
        pos += 8;
    }
    let total: usize = shapes.iter().map(|(r, c)| r * c).sum();
    if bytes.len() != pos + 8 * total {
        return Err(bad(&format!(
            "payload holds {} bytes, shape table needs {}",
            bytes.len() - pos,
            8 * total
        )));
    }
    let mut out = Vec::with_capacity(count);
    for (r, c) in shapes {
        let data = bytes[pos..pos + 8 * r * c]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        pos += 8 * r * c;
        out.push(Matrix::from_vec(r, c, data)?);
    }
    Ok(out)
}

pub fn save<P: Parameterized>(params: &P, path: &Path) -> Result<()> {
    fs::write(path, encode(&params.tensors())).map_err(|e| Error::io(path, e))
}

/// Overwrites `params` with the tensors stored at `path`; shapes must match.
pub fn load_into<P: Parameterized>(params: &mut P, path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let loaded = decode(&bytes)?;
    let mut targets = params.tensors_mut();
    if loaded.len() != targets.len() {
        return Err(Error::Checkpoint(format!(
            "{} tensors in file, model has {}",
            loaded.len(),
            targets.len()
        )));
    }
    for (i, (dst, src)) in targets.iter_mut().zip(loaded).enumerate() {
        if dst.shape() != src.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {i}: file {:?}, model {:?}",
                src.shape(),
                dst.shape()
            )));
        }
        **dst = src;
    }
    Ok(())
}
