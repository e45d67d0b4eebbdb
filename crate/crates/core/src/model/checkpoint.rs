//! Checkpoint files.
//!
//! ```text
//! "LHM1" | u16 version | u32 block count
//! per block: u16 name length | name (UTF-8) | u8 rank | rank x u32 dims | f64 values (row-major)
//! ```

use std::path::Path;

use super::{Arch, ModelParams};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LHM1";
const VERSION: u16 = 1;

/// A named tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let blocks = params.layout.blocks(&params.arch);
    let mut w = Writer::with_capacity(16 + params.n_params() * 8 + blocks.len() * 48);
    w.bytes(CHECKPOINT_MAGIC);
    w.u16(VERSION);
    w.u32(blocks.len() as u32);
    for (name, offset, dims) in &blocks {
        w.u16(name.len() as u16);
        w.bytes(name.as_bytes());
        w.u8(dims.len() as u8);
        for d in dims {
            w.u32(*d as u32);
        }
        let n: usize = dims.iter().product();
        for v in &params.data[*offset..offset + n] {
            w.f64(*v);
        }
    }
    w.buf
}

/// Parses the raw blocks without checking them against an architecture.
pub fn decode_blocks(bytes: &[u8]) -> Result<Vec<Block>> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::at_offset(0, "bad magic"));
    }
    let mut r = Reader::new(bytes);
    r.take(4, "magic")?;
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::at_offset(
            4,
            format!("unsupported version {version}"),
        ));
    }
    let count_at = r.offset();
    let n_blocks = r.u32("block count")? as usize;
    if n_blocks.saturating_mul(3) > r.remaining() {
        return Err(Error::at_offset(
            count_at,
            format!("truncated payload: {n_blocks} blocks cannot fit"),
        ));
    }
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let at = r.offset();
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "block name")?)
            .map_err(|_| Error::at_offset(at, "block name is not UTF-8"))?
            .to_owned();
        let rank = r.u8("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dim")? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
            .ok_or_else(|| {
                Error::at_offset(r.offset(), format!("truncated values for block '{name}'"))
            })?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(r.f64("value")?);
        }
        blocks.push(Block { name, dims, values });
    }
    r.expect_end()?;
    Ok(blocks)
}

/// Decodes a checkpoint for `arch`; every block must be present with the
/// expected shape and finite values.
pub fn decode_checkpoint(bytes: &[u8], arch: &Arch) -> Result<ModelParams> {
    let blocks = decode_blocks(bytes)?;
    let mut params = ModelParams::zeros(arch.clone());
    let expected = params.layout.blocks(arch);
    if blocks.len() != expected.len() {
        return Err(Error::Shape(format!(
            "checkpoint has {} blocks, architecture needs {}",
            blocks.len(),
            expected.len()
        )));
    }
    for (name, offset, dims) in &expected {
        let b = blocks
            .iter()
            .find(|b| &b.name == name)
            .ok_or_else(|| Error::Shape(format!("missing block '{name}'")))?;
        if &b.dims != dims {
            return Err(Error::Shape(format!(
                "block '{name}' has shape {:?}, expected {:?}",
                b.dims, dims
            )));
        }
        if b.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Corrupted(format!(
                "block '{name}' has non-finite values"
            )));
        }
        params.data[*offset..offset + b.values.len()].copy_from_slice(&b.values);
    }
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, arch: &Arch) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, arch)
}
