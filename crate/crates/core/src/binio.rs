//! Little-endian primitives shared by the binary file formats.

use crate::error::{Error, Result};

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        if end > self.buf.len() {
            return Err(Error::Truncated);
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn expect_magic(&mut self, magic: &'static str) -> Result<()> {
        let got = self.take(magic.len()).map_err(|_| Error::BadMagic { expected: magic })?;
        if got != magic.as_bytes() {
            return Err(Error::BadMagic { expected: magic });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn str_u16(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Malformed { what: "string", line: 0, reason: "invalid UTF-8".into() })
    }

    /// Checks that `count` items of `item_bytes` each can still be read.
    pub fn ensure(&self, count: usize, item_bytes: usize) -> Result<()> {
        let need = count
            .checked_mul(item_bytes)
            .ok_or_else(|| Error::DimensionOverflow(format!("{count} x {item_bytes} bytes")))?;
        if need > self.remaining() {
            return Err(Error::Truncated);
        }
        Ok(())
    }
}

pub(crate) fn put_str_u16(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let n = u16::try_from(s.len())
        .map_err(|_| Error::DimensionOverflow(format!("string of {} bytes", s.len())))?;
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub(crate) fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::DimensionOverflow(format!("{what} = {n}")))
}
