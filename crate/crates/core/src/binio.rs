//! Little-endian record helpers shared by the dataset and checkpoint formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }

    pub fn u16(&mut self, v: u16) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn len_u32(&mut self, n: usize, what: &str) -> Result<()> {
        let v = u32::try_from(n)
            .map_err(|_| Error::InvalidData(format!("{what} length {n} exceeds u32")))?;
        self.u32(v)
    }

    /// u32 byte length followed by the UTF-8 text.
    pub fn text(&mut self, s: &str) -> Result<()> {
        self.len_u32(s.len(), "text blob")?;
        self.bytes(s.as_bytes())
    }

    pub fn f32_slice(&mut self, values: impl IntoIterator<Item = f32>) -> Result<()> {
        let mut buf = Vec::new();
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.bytes(&buf)
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Reader over an in-memory buffer that reports byte offsets on failure.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Format { offset: self.offset(), message: message.into() }
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.buf.len() - self.pos;
        if n > remaining {
            return Err(self.error(format!(
                "truncated {what}: need {n} bytes, {remaining} remain"
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn text(&mut self, what: &str) -> Result<&'a str> {
        let n = self.u32(what)? as usize;
        let start = self.offset();
        let b = self.take(n, what)?;
        std::str::from_utf8(b).map_err(|e| Error::Format {
            offset: start + e.valid_up_to() as u64,
            message: format!("{what} is not valid UTF-8"),
        })
    }

    pub fn f32_vec(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| self.error(format!("{what} length overflows")))?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub fn magic(&mut self, expected: &[u8; 4], what: &str) -> Result<()> {
        let b = self.take(4, what)?;
        if b != expected {
            self.pos -= 4;
            return Err(self.error(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(b),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    let mut f = std::fs::File::open(path)?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    Ok(buf)
}
