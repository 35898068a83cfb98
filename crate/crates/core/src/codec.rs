//! Little-endian primitive readers and writers shared by the bundle chunk codecs.

use crate::error::BundleError;

#[derive(Default)]
pub struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor over a byte slice; every read reports truncation instead of panicking.
pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
    context: &'static str,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8], context: &'static str) -> Self {
        Self { data, pos: 0, context }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], BundleError> {
        if n > self.remaining() {
            return Err(BundleError::Truncated(format!(
                "{}: wanted {n} bytes at offset {}, {} left",
                self.context,
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, BundleError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, BundleError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, BundleError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, BundleError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Length-prefixed array; rejects lengths that cannot fit in the remaining bytes.
    pub fn f64s(&mut self) -> Result<Vec<f64>, BundleError> {
        let n = self.len_prefix(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], BundleError> {
        let n = self.len_prefix(1)?;
        self.take(n)
    }

    pub fn str(&mut self) -> Result<String, BundleError> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| BundleError::Malformed {
            chunk: self.context.into(),
            detail: "invalid UTF-8".into(),
        })
    }

    fn len_prefix(&mut self, elem: usize) -> Result<usize, BundleError> {
        let n = self.u64()?;
        let n = usize::try_from(n).unwrap_or(usize::MAX);
        if n.saturating_mul(elem) > self.remaining() {
            return Err(BundleError::Truncated(format!(
                "{}: array of {n} elements exceeds remaining {} bytes",
                self.context,
                self.remaining()
            )));
        }
        Ok(n)
    }
}

/// Rejects NaN / ±∞ with the offending field and index.
pub fn check_finite(field: &str, values: &[f64]) -> Result<(), BundleError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(BundleError::NonFinite { field: field.into(), index }),
        None => Ok(()),
    }
}
