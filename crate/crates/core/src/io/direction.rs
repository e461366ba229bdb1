//! Direction file: magic `GASPDIRN`, u16 version, u64 body length, then the
//! UTF-8 name, unit vector, bias and training accuracy, CRC32.

use std::path::Path;

use super::frame::{body, finish_sized, open_sized};
use super::{read_bytes, write_bytes};
use crate::analysis::LatentDirection;
use crate::error::{Error, Result};

pub const DIRECTION_MAGIC: &[u8; 8] = b"GASPDIRN";
const VERSION: u16 = 1;
const WHAT: &str = "direction file";

pub fn encode_direction(d: &LatentDirection) -> Result<Vec<u8>> {
    d.validate()?;
    let mut w = body();
    w.u32(d.name.len() as u32);
    w.buf.extend_from_slice(d.name.as_bytes());
    w.u32(d.direction.len() as u32);
    w.f64s(&d.direction);
    w.f64(d.bias);
    w.f64(d.accuracy);
    Ok(finish_sized(DIRECTION_MAGIC, VERSION, w))
}

pub fn decode_direction(bytes: &[u8]) -> Result<LatentDirection> {
    let mut r = open_sized(bytes, DIRECTION_MAGIC, &[VERSION], WHAT)?;
    let len = r.u32()? as usize;
    let name = (0..len).map(|_| r.u8()).collect::<Result<Vec<u8>>>()?;
    let name = String::from_utf8(name).map_err(|e| Error::InvalidArgument(format!("direction name: {e}")))?;
    let dim = r.u32()? as usize;
    let direction = r.f64s(dim)?;
    let bias = r.f64()?;
    let accuracy = r.f64()?;
    if r.pos() + 4 != bytes.len() {
        return Err(Error::Truncated {
            what: WHAT,
            detail: "body length disagrees with its contents".into(),
        });
    }
    let d = LatentDirection {
        name,
        direction,
        bias,
        accuracy,
    };
    d.validate()?;
    Ok(d)
}

pub fn save_direction(d: &LatentDirection, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_direction(d)?)
}

pub fn load_direction(path: impl AsRef<Path>) -> Result<LatentDirection> {
    decode_direction(&read_bytes(path.as_ref())?)
}
