//! Little-endian binary container helpers shared by the dataset and model
//! file formats. Every container is `magic | version u16 | body | crc32`,
//! where the CRC covers every byte that precedes it.

use crate::error::{Error, Result};

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u16) -> Self {
        let mut w = Writer::default();
        w.buf.extend_from_slice(magic);
        w.u16(version);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
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

    pub fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        let len = u16::try_from(s.len())
            .map_err(|_| Error::InvalidArgument(format!("string too long ({} bytes)", s.len())))?;
        self.u16(len);
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }

    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Validates magic, version and trailing checksum, returning a reader
    /// positioned just after the version field.
    pub fn open(bytes: &'a [u8], magic: &'static [u8; 4], version: u16) -> Result<Self> {
        let expected = std::str::from_utf8(magic).unwrap_or("????");
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(Error::Magic { expected });
        }
        if bytes.len() < 6 {
            return Err(Error::Checksum {
                stored: 0,
                computed: crc32fast::hash(bytes),
            });
        }
        let found = u16::from_le_bytes([bytes[4], bytes[5]]);
        if found != version {
            return Err(Error::Version {
                found,
                expected: version,
            });
        }
        if bytes.len() < 10 {
            return Err(Error::Checksum {
                stored: 0,
                computed: crc32fast::hash(bytes),
            });
        }
        let (payload, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]);
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        Ok(Reader { buf: payload, pos: 6 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!("unexpected end of payload at byte {}", self.pos)));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len_prefix(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format("string is not UTF-8".into()))
    }

    /// Reads a u64 element count and checks that at least `count * elem_size`
    /// bytes remain, so corrupt counts cannot trigger huge allocations.
    pub fn len_prefix(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(elem_size as u64) > remaining {
            return Err(Error::Format(format!("length {n} exceeds payload")));
        }
        Ok(n as usize)
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes before checksum",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let mut w = Writer::new(b"TEST", 3);
        w.u8(7);
        w.f64s(&[1.5, -2.25]);
        w.str("urban").unwrap();
        let bytes = w.finish();

        let mut r = Reader::open(&bytes, b"TEST", 3).unwrap();
        assert_eq!(r.u8().unwrap(), 7);
        assert_eq!(r.f64s().unwrap(), vec![1.5, -2.25]);
        assert_eq!(r.str().unwrap(), "urban");
        r.finish().unwrap();
    }

    #[test]
    fn rejects_wrong_version_before_checksum() {
        let mut bytes = Writer::new(b"TEST", 1).finish();
        bytes[4] = 9;
        assert!(matches!(
            Reader::open(&bytes, b"TEST", 1),
            Err(Error::Version { found: 9, .. })
        ));
    }

    #[test]
    fn rejects_truncation() {
        let mut w = Writer::new(b"TEST", 1);
        w.f64s(&[1.0, 2.0, 3.0]);
        let bytes = w.finish();
        let cut = &bytes[..bytes.len() - 5];
        assert!(matches!(Reader::open(cut, b"TEST", 1), Err(Error::Checksum { .. })));
    }
}
