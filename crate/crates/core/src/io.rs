//! Little-endian binary helpers shared by the `SWSK`, `SWTM` and `SWMX` formats.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::{Error, Result};

/// Reader that remembers its byte offset so format errors can point at it.
pub(crate) struct BinReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> BinReader<R> {
    pub fn new(inner: R) -> Self {
        BinReader { inner, offset: 0 }
    }

    pub fn with_offset(inner: R, offset: u64) -> Self {
        BinReader { inner, offset }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn into_inner(self) -> R {
        self.inner
    }

    pub fn fail<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::Format { offset: self.offset, reason: reason.into() })
    }

    fn map_err(&self, e: std::io::Error, what: &str) -> Error {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format { offset: self.offset, reason: format!("truncated while reading {what}") }
        } else {
            Error::Io(e)
        }
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let mut buf = [0u8; 4];
        self.inner.read_exact(&mut buf).map_err(|e| self.map_err(e, "magic"))?;
        if &buf != expected {
            return self.fail(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&buf),
                String::from_utf8_lossy(expected)
            ));
        }
        self.offset += 4;
        Ok(())
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let v = self.inner.read_u32::<LittleEndian>().map_err(|e| self.map_err(e, what))?;
        self.offset += 4;
        Ok(v)
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        let v = self.inner.read_u64::<LittleEndian>().map_err(|e| self.map_err(e, what))?;
        self.offset += 8;
        Ok(v)
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        let v = self.inner.read_f64::<LittleEndian>().map_err(|e| self.map_err(e, what))?;
        self.offset += 8;
        Ok(v)
    }

    pub fn f64_vec(&mut self, len: usize, what: &str) -> Result<Vec<f64>> {
        let mut out = vec![0.0; len];
        self.inner
            .read_f64_into::<LittleEndian>(&mut out)
            .map_err(|e| self.map_err(e, what))?;
        self.offset += 8 * len as u64;
        Ok(out)
    }

    pub fn u32_vec(&mut self, len: usize, what: &str) -> Result<Vec<u32>> {
        let mut out = vec![0u32; len];
        self.inner
            .read_u32_into::<LittleEndian>(&mut out)
            .map_err(|e| self.map_err(e, what))?;
        self.offset += 4 * len as u64;
        Ok(out)
    }

    pub fn version(&mut self, expected: u32) -> Result<()> {
        let at = self.offset;
        let v = self.u32("version")?;
        if v != expected {
            return Err(Error::Format { offset: at, reason: format!("unsupported version {v}") });
        }
        Ok(())
    }

    /// Errors unless the stream is exhausted.
    pub fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => self.fail("trailing bytes"),
        }
    }
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for &v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_u32::<LittleEndian>(v)?;
    Ok(())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_u64::<LittleEndian>(v)?;
    Ok(())
}

pub(crate) fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::invalid(format!("{what} = {v} does not fit in u32")))
}
