//! Little-endian payload helpers shared by the detector encoders.

use super::DetectError;

#[derive(Default)]
pub(crate) struct ByteWriter(Vec<u8>);

impl ByteWriter {
    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.0.push(v);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }

    /// Length-prefixed f64 slice.
    pub fn f64s(&mut self, v: &[f64]) -> &mut Self {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.0
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DetectError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                DetectError::MalformedPayload(format!("truncated at byte {}", self.pos))
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DetectError> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> Result<u64, DetectError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn usize(&mut self) -> Result<usize, DetectError> {
        usize::try_from(self.u64()?)
            .map_err(|_| DetectError::MalformedPayload("length overflow".into()))
    }

    pub fn f64(&mut self) -> Result<f64, DetectError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>, DetectError> {
        let n = self.usize()?;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(DetectError::MalformedPayload(format!(
                "array of {n} exceeds payload"
            )));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn finish(self) -> Result<(), DetectError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(DetectError::MalformedPayload(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )))
        }
    }
}
