//! Parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "STMC"  u16 version
//! repeated until end of file:
//!   u16 name length, name bytes (UTF-8)
//!   u8 rank, u32 extent × rank
//!   f64 sample × product(extents)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"STMC";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(stores: &[&ParamStore]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for p in stores.iter().flat_map(|s| s.iter()) {
        let name = p.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(p.value.rank() as u8);
        for &e in p.value.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_checkpoint(path: &Path, stores: &[&ParamStore]) -> Result<()> {
    fs::write(path, encode_checkpoint(stores)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                offset: self.pos as u64,
                msg: format!(
                    "truncated {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn fail(&self, offset: usize, msg: String) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            msg,
        }
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut c = Cursor { bytes, pos: 0, path };
    let magic = c.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(c.fail(0, format!("bad magic {magic:?}, expected \"STMC\"")));
    }
    let version = c.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(c.fail(4, format!("unsupported checkpoint version {version}")));
    }
    let mut records = Vec::new();
    while c.pos < bytes.len() {
        let start = c.pos;
        let n = c.u16("name length")? as usize;
        let name = std::str::from_utf8(c.take(n, "name")?)
            .map_err(|_| c.fail(start + 2, "parameter name is not UTF-8".into()))?
            .to_string();
        let rank = c.take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("extent")? as usize);
        }
        let count: usize = shape.iter().product();
        let raw = c.take(count * 8, "samples")?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(&shape, data)
            .map_err(|e| c.fail(start, format!("parameter {name:?}: {e}")))?;
        records.push((name, t));
    }
    Ok(records)
}
