//! Canonical byte encoding used for everything that is hashed, signed or
//! stored. Integers are big-endian, variable-length fields carry a `u32`
//! length prefix, group elements use their compressed encodings.

use bls12_381::{G1Affine, G2Affine, Scalar};

use crate::pairing;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("scalar is not a canonical field element")]
    InvalidScalar,
    #[error("invalid {0} point encoding")]
    InvalidPoint(&'static str),
    #[error("unknown {what} tag {tag}")]
    InvalidTag { what: &'static str, tag: u8 },
    #[error("string is not valid UTF-8")]
    InvalidUtf8,
    #[error("length {0} exceeds remaining input")]
    LengthOverflow(usize),
    #[error("invalid value: {0}")]
    InvalidValue(&'static str),
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_domain(domain: &str) -> Self {
        let mut w = Self::new();
        w.put_str(domain);
        w
    }

    pub fn put_u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn put_u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn put_u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn put_bool(&mut self, v: bool) -> &mut Self {
        self.put_u8(v as u8)
    }

    /// Appends raw bytes with no length prefix. Only for fixed-width fields.
    pub fn put_fixed(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn put_bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.put_u32(u32::try_from(bytes.len()).expect("field longer than u32::MAX"));
        self.put_fixed(bytes)
    }

    pub fn put_str(&mut self, s: &str) -> &mut Self {
        self.put_bytes(s.as_bytes())
    }

    pub fn put_scalar(&mut self, s: &Scalar) -> &mut Self {
        self.put_fixed(&pairing::scalar_to_bytes(s))
    }

    pub fn put_g1(&mut self, p: &G1Affine) -> &mut Self {
        self.put_fixed(&p.to_compressed())
    }

    pub fn put_g2(&mut self, p: &G2Affine) -> &mut Self {
        self.put_fixed(&p.to_compressed())
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::UnexpectedEnd);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn take_array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn get_u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn get_u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take_array()?))
    }

    pub fn get_u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take_array()?))
    }

    pub fn get_bool(&mut self) -> Result<bool, CodecError> {
        match self.get_u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(CodecError::InvalidTag { what: "bool", tag }),
        }
    }

    pub fn get_bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let len = self.get_u32()? as usize;
        if len > self.remaining() {
            return Err(CodecError::LengthOverflow(len));
        }
        self.take(len)
    }

    pub fn get_string(&mut self) -> Result<String, CodecError> {
        let raw = self.get_bytes()?;
        std::str::from_utf8(raw)
            .map(str::to_owned)
            .map_err(|_| CodecError::InvalidUtf8)
    }

    pub fn get_scalar(&mut self) -> Result<Scalar, CodecError> {
        pairing::scalar_from_bytes(&self.take_array()?).ok_or(CodecError::InvalidScalar)
    }

    pub fn get_g1(&mut self) -> Result<G1Affine, CodecError> {
        let raw: [u8; 48] = self.take_array()?;
        Option::from(G1Affine::from_compressed(&raw)).ok_or(CodecError::InvalidPoint("G1"))
    }

    pub fn get_g2(&mut self) -> Result<G2Affine, CodecError> {
        let raw: [u8; 96] = self.take_array()?;
        Option::from(G2Affine::from_compressed(&raw)).ok_or(CodecError::InvalidPoint("G2"))
    }

    /// Reads a `u32` element count, rejecting counts that could not possibly
    /// fit in the remaining input given a minimum element width.
    pub fn get_count(&mut self, min_elem_len: usize) -> Result<usize, CodecError> {
        let n = self.get_u32()? as usize;
        if n.saturating_mul(min_elem_len.max(1)) > self.remaining() {
            return Err(CodecError::LengthOverflow(n));
        }
        Ok(n)
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}
