//! Length-prefixed field encoding shared by board payloads and wire messages.
//!
//! Every field is `len (u32 BE) ‖ bytes`. Group values inside a field use the
//! fixed-width big-endian encoding of [`GroupParams`].

use thiserror::Error;

use crate::crypto::{GroupElement, GroupError, GroupParams, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("trailing bytes after last field")]
    Trailing,
    #[error("unknown tag {0:#04x}")]
    UnknownTag(u8),
    #[error("field has wrong length")]
    BadLength,
    #[error("invalid utf-8 in text field")]
    Utf8,
    #[error(transparent)]
    Group(#[from] GroupError),
}

pub struct Writer<'p> {
    params: &'p GroupParams,
    buf: Vec<u8>,
}

impl<'p> Writer<'p> {
    pub fn new(params: &'p GroupParams) -> Self {
        Writer { params, buf: Vec::new() }
    }

    pub fn with_tag(params: &'p GroupParams, tag: u8) -> Self {
        Writer { params, buf: vec![tag] }
    }

    pub fn bytes(&mut self, data: &[u8]) -> &mut Self {
        self.buf.extend((data.len() as u32).to_be_bytes());
        self.buf.extend(data);
        self
    }

    pub fn text(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn element(&mut self, e: &GroupElement) -> &mut Self {
        let bytes = self.params.element_bytes(e);
        self.bytes(&bytes)
    }

    pub fn scalar(&mut self, s: &Scalar) -> &mut Self {
        let bytes = self.params.scalar_bytes(s);
        self.bytes(&bytes)
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

pub struct Reader<'a, 'p> {
    params: &'p GroupParams,
    data: &'a [u8],
}

impl<'a, 'p> Reader<'a, 'p> {
    pub fn new(params: &'p GroupParams, data: &'a [u8]) -> Self {
        Reader { params, data }
    }

    pub fn tag(&mut self) -> Result<u8, DecodeError> {
        let (&tag, rest) = self.data.split_first().ok_or(DecodeError::Truncated)?;
        self.data = rest;
        Ok(tag)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        if self.data.len() < 4 {
            return Err(DecodeError::Truncated);
        }
        let len = u32::from_be_bytes(self.data[..4].try_into().unwrap()) as usize;
        let rest = &self.data[4..];
        if rest.len() < len {
            return Err(DecodeError::Truncated);
        }
        let (field, rest) = rest.split_at(len);
        self.data = rest;
        Ok(field)
    }

    pub fn text(&mut self) -> Result<String, DecodeError> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| DecodeError::Utf8)
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        let field = self.bytes()?;
        let arr: [u8; 8] = field.try_into().map_err(|_| DecodeError::BadLength)?;
        Ok(u64::from_be_bytes(arr))
    }

    pub fn array32(&mut self) -> Result<[u8; 32], DecodeError> {
        self.bytes()?.try_into().map_err(|_| DecodeError::BadLength)
    }

    pub fn element(&mut self) -> Result<GroupElement, DecodeError> {
        let field = self.bytes()?;
        Ok(self.params.element_from_bytes(field)?)
    }

    pub fn scalar(&mut self) -> Result<Scalar, DecodeError> {
        let field = self.bytes()?;
        Ok(self.params.scalar_from_bytes(field)?)
    }

    pub fn params(&self) -> &'p GroupParams {
        self.params
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        if self.data.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::Trailing)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_round_trip() {
        let params = GroupParams::new(23, 11, 2, 3).unwrap();
        let bytes = Writer::with_tag(&params, 0x42)
            .text("alice")
            .u64(7)
            .element(&params.g())
            .scalar(&params.scalar(5))
            .finish();
        let mut r = Reader::new(&params, &bytes);
        assert_eq!(r.tag().unwrap(), 0x42);
        assert_eq!(r.text().unwrap(), "alice");
        assert_eq!(r.u64().unwrap(), 7);
        assert_eq!(r.element().unwrap(), params.g());
        assert_eq!(r.scalar().unwrap(), params.scalar(5));
        r.finish().unwrap();
    }

    #[test]
    fn truncation_and_trailing_detected() {
        let params = GroupParams::new(23, 11, 2, 3).unwrap();
        let bytes = Writer::new(&params).text("abc").finish();
        assert_eq!(Reader::new(&params, &bytes[..5]).bytes().unwrap_err(), DecodeError::Truncated);
        let mut extended = bytes.clone();
        extended.push(0);
        let mut r = Reader::new(&params, &extended);
        r.bytes().unwrap();
        assert_eq!(r.finish().unwrap_err(), DecodeError::Trailing);
    }
}
