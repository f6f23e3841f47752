//! Flat binary archive of named 2-D tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "ATCK" | version u32 | meta_len u32 | meta bytes (UTF-8)
//! param_count u32
//! per parameter: name_len u32 | name bytes | rank u32 | dims u64 * rank
//!                | values f64 * prod(dims)
//! ```
//!
//! Values are written with `f64::to_le_bytes`, so a round trip is bit-exact.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::CheckpointError;

pub const MAGIC: &[u8; 4] = b"ATCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    /// Free-form header text; the policy stores its architecture here.
    pub meta: String,
    pub tensors: Vec<(String, Array2<f64>)>,
}

pub fn write_archive<W: Write>(mut out: W, archive: &Archive) -> Result<(), CheckpointError> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    write_bytes(&mut out, archive.meta.as_bytes())?;
    out.write_all(&(archive.tensors.len() as u32).to_le_bytes())?;
    for (name, t) in &archive.tensors {
        write_bytes(&mut out, name.as_bytes())?;
        out.write_all(&2u32.to_le_bytes())?;
        for d in t.shape() {
            out.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in t.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_bytes<W: Write>(out: &mut W, bytes: &[u8]) -> std::io::Result<()> {
    out.write_all(&(bytes.len() as u32).to_le_bytes())?;
    out.write_all(bytes)
}

pub fn read_archive<R: Read>(mut input: R) -> Result<Archive, CheckpointError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let meta = read_string(&mut input)?;
    let count = read_u32(&mut input)?;
    let mut tensors = Vec::with_capacity(count.min(4096) as usize);
    for _ in 0..count {
        let name = read_string(&mut input)?;
        let rank = read_u32(&mut input)?;
        if rank == 0 || rank > 2 {
            return Err(CheckpointError::Malformed(format!(
                "`{name}` has unsupported rank {rank}"
            )));
        }
        let mut dims = [1usize; 2];
        for d in dims.iter_mut().skip(2 - rank as usize) {
            *d = usize::try_from(read_u64(&mut input)?)
                .map_err(|_| CheckpointError::Malformed("dimension overflow".into()))?;
        }
        let len = dims[0]
            .checked_mul(dims[1])
            .filter(|&l| l <= 1 << 28)
            .ok_or_else(|| CheckpointError::Malformed(format!("`{name}` is implausibly large")))?;
        let mut raw = vec![0u8; len * 8];
        input.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let t = Array2::from_shape_vec((dims[0], dims[1]), values)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        tensors.push((name, t));
    }
    Ok(Archive { meta, tensors })
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R) -> Result<String, CheckpointError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(CheckpointError::Malformed("string field too long".into()));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| CheckpointError::Malformed(e.to_string()))
}
