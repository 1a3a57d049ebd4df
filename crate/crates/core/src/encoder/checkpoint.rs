//! `ANEM` checkpoint files: magic, version byte, `u32` metadata length and
//! UTF-8 metadata (the encoder config), `u32` tensor count, then per tensor a
//! `u16`-prefixed name, `u8` rank, `rank x u32` dims and binary64 data. All
//! integers little-endian.

use std::path::Path;

use super::{EncoderConfig, ParameterSet, Tensor};
use crate::binio::{self, Reader};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "ANEM";
const VERSION: u8 = 1;

pub fn encode_checkpoint(params: &ParameterSet) -> Result<Vec<u8>> {
    let meta = params.config().describe();
    let mut out = Vec::with_capacity(64 + 8 * params.num_params());
    out.extend_from_slice(CHECKPOINT_MAGIC.as_bytes());
    out.push(VERSION);
    out.extend_from_slice(&binio::to_u32(meta.len(), "metadata length")?.to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(&binio::to_u32(params.tensors().len(), "tensor count")?.to_le_bytes());
    for t in params.tensors() {
        binio::put_str_u16(&mut out, &t.name)?;
        let rank = u8::try_from(t.shape.len()).map_err(|_| Error::DimensionOverflow(format!("rank of {}", t.name)))?;
        out.push(rank);
        for &d in &t.shape {
            out.extend_from_slice(&binio::to_u32(d, "tensor dim")?.to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<ParameterSet> {
    let mut r = Reader::new(buf);
    r.expect_magic(CHECKPOINT_MAGIC)?;
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let meta_len = r.u32()? as usize;
    let meta = std::str::from_utf8(r.take(meta_len)?)
        .map_err(|_| Error::Malformed { what: "checkpoint metadata", line: 0, reason: "invalid UTF-8".into() })?;
    let config = EncoderConfig::parse_description(meta)?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = r.str_u16()?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::DimensionOverflow(format!("shape {shape:?}")))?;
        r.ensure(n, 8)?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(r.f64()?);
        }
        tensors.push(Tensor { name, shape, data });
    }
    if r.remaining() != 0 {
        return Err(Error::Malformed { what: "checkpoint", line: 0, reason: "trailing bytes".into() });
    }
    ParameterSet::from_parts(config, tensors)
}

pub fn write_checkpoint(path: &Path, params: &ParameterSet) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ParameterSet> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&buf)
}
