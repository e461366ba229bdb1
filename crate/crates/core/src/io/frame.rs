//! Little-endian framing shared by the binary formats: magic, version,
//! payload, then a CRC32 of every preceding byte.

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use crate::error::{Error, Result};

pub(crate) const HEADER_BYTES: usize = 10;

pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8], version: u16) -> Self {
        let mut buf = magic.to_vec();
        buf.write_u16::<LittleEndian>(version).expect("vec write");
        Self { buf }
    }

    pub fn u8(&mut self, x: u8) {
        self.buf.push(x);
    }

    pub fn u32(&mut self, x: u32) {
        self.buf.write_u32::<LittleEndian>(x).expect("vec write");
    }

    pub fn u64(&mut self, x: u64) {
        self.buf.write_u64::<LittleEndian>(x).expect("vec write");
    }

    pub fn f32(&mut self, x: f32) {
        self.buf.write_f32::<LittleEndian>(x).expect("vec write");
    }

    pub fn f64(&mut self, x: f64) {
        self.buf.write_f64::<LittleEndian>(x).expect("vec write");
    }

    pub fn f64s(&mut self, xs: &[f64]) {
        for &x in xs {
            self.f64(x);
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.write_u32::<LittleEndian>(crc).expect("vec write");
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

/// Checks magic and version; returns a reader positioned after them and the
/// version. The checksum is verified separately by [`verify_checksum`].
pub(crate) fn open<'a>(bytes: &'a [u8], magic: &[u8; 8], versions: &[u16], what: &'static str) -> Result<(Reader<'a>, u16)> {
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            what,
            detail: format!("{} bytes is shorter than the magic", bytes.len()),
        });
    }
    if &bytes[..8] != magic {
        return Err(Error::BadMagic { what });
    }
    let mut r = Reader { buf: bytes, pos: 8, what };
    let version = r.u16()?;
    if !versions.contains(&version) {
        return Err(Error::UnsupportedVersion { what, version });
    }
    Ok((r, version))
}

/// Requires exactly `expected` bytes in total and a matching trailing CRC.
pub(crate) fn verify_checksum(bytes: &[u8], expected: usize, what: &'static str) -> Result<()> {
    if bytes.len() != expected {
        return Err(Error::Truncated {
            what,
            detail: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let (body, tail) = bytes.split_at(expected - 4);
    let stored = LittleEndian::read_u32(tail);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch { what, stored, computed });
    }
    Ok(())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| Error::Truncated {
            what: self.what,
            detail: format!("need {n} bytes at offset {}", self.pos),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(LittleEndian::read_u16(self.take(2)?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(LittleEndian::read_f32(self.take(4)?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(LittleEndian::read_f64(self.take(8)?))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Length-prefixed body framing: magic, version, u64 body length, body, CRC.
pub(crate) fn open_sized<'a>(bytes: &'a [u8], magic: &[u8; 8], versions: &[u16], what: &'static str) -> Result<Reader<'a>> {
    let (mut r, _) = open(bytes, magic, versions, what)?;
    let len = r.u64()?;
    let expected = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(HEADER_BYTES + 8 + 4))
        .ok_or_else(|| Error::Truncated {
            what,
            detail: format!("body length {len} is implausible"),
        })?;
    verify_checksum(bytes, expected, what)?;
    Ok(r)
}

pub(crate) fn finish_sized(magic: &[u8; 8], version: u16, body: Writer) -> Vec<u8> {
    let mut w = Writer::new(magic, version);
    w.u64(body.buf.len() as u64);
    w.buf.extend_from_slice(&body.buf);
    w.finish()
}

/// A payload-only writer, framed later by [`finish_sized`].
pub(crate) fn body() -> Writer {
    Writer { buf: Vec::new() }
}
