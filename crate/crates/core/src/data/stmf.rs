//! The STMF clip container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "STMF"
//! 4       2     version (1), u16
//! 6       16    T, H, W, C as u32
//! 22      1     dtype: 0 = f32, 1 = f64
//! 23      …     samples, row-major (T, H, W, C)
//! ```
//!
//! All integers and samples are little-endian. The file length must match
//! the header exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::video::VideoTensor;

pub const STMF_MAGIC: &[u8; 4] = b"STMF";
pub const STMF_VERSION: u16 = 1;
pub const STMF_HEADER_LEN: usize = 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

pub fn encode_stmf(clip: &VideoTensor, dtype: Dtype) -> Vec<u8> {
    let t = clip.tensor();
    let mut out = Vec::with_capacity(STMF_HEADER_LEN + t.len() * dtype.width());
    out.extend_from_slice(STMF_MAGIC);
    out.extend_from_slice(&STMF_VERSION.to_le_bytes());
    for &e in t.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    out.push(dtype.tag());
    for &v in t.data() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn write_stmf(path: &Path, clip: &VideoTensor, dtype: Dtype) -> Result<()> {
    fs::write(path, encode_stmf(clip, dtype)).map_err(|e| Error::io(path, e))
}

pub fn read_stmf(path: &Path) -> Result<VideoTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_stmf(&bytes, path).map(|(clip, _)| clip)
}

/// Parses an STMF image; `path` is used only in diagnostics.
pub fn decode_stmf(bytes: &[u8], path: &Path) -> Result<(VideoTensor, Dtype)> {
    let fail = |offset: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg,
    };
    if bytes.len() < STMF_HEADER_LEN {
        return Err(fail(
            bytes.len(),
            format!("truncated header: expected {STMF_HEADER_LEN} bytes, file has {}", bytes.len()),
        ));
    }
    if &bytes[..4] != STMF_MAGIC {
        return Err(fail(
            0,
            format!("bad magic {:?}, expected \"STMF\"", String::from_utf8_lossy(&bytes[..4])),
        ));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != STMF_VERSION {
        return Err(fail(4, format!("unknown version {version}, expected {STMF_VERSION}")));
    }
    let dims: Vec<usize> = (0..4)
        .map(|i| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().expect("4 bytes")) as usize)
        .collect();
    let dtype = match bytes[22] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => return Err(fail(22, format!("unknown dtype tag {other}"))),
    };
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let expected = count
        .and_then(|c| c.checked_mul(dtype.width()))
        .ok_or_else(|| fail(6, format!("header extents {dims:?} overflow")))?;
    let payload = &bytes[STMF_HEADER_LEN..];
    if payload.len() != expected {
        let kind = if payload.len() < expected { "truncated payload" } else { "trailing bytes after payload" };
        return Err(fail(
            STMF_HEADER_LEN + payload.len().min(expected),
            format!("{kind}: expected {expected} payload bytes, found {}", payload.len()),
        ));
    }
    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect(),
    };
    let tensor = Tensor::new(&dims, data).map_err(|e| fail(STMF_HEADER_LEN, e.to_string()))?;
    let clip = VideoTensor::new(tensor).map_err(|e| fail(6, e.to_string()))?;
    Ok((clip, dtype))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip() -> VideoTensor {
        let data = (0..2 * 3 * 2).map(|v| v as f64 / 7.0).collect();
        VideoTensor::new(Tensor::new(&[2, 3, 2, 1], data).unwrap()).unwrap()
    }

    #[test]
    fn header_layout() {
        let b = encode_stmf(&clip(), Dtype::F64);
        assert_eq!(&b[..4], b"STMF");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(u32::from_le_bytes(b[10..14].try_into().unwrap()), 3);
        assert_eq!(b[22], 1);
        assert_eq!(b.len(), STMF_HEADER_LEN + 12 * 8);
    }

    #[test]
    fn truncation_names_byte_counts() {
        let b = encode_stmf(&clip(), Dtype::F32);
        let err = decode_stmf(&b[..b.len() - 5], Path::new("c.stmf")).unwrap_err().to_string();
        assert!(err.contains("expected 48 payload bytes, found 43"), "{err}");
    }

    #[test]
    fn bad_magic_and_version() {
        let mut b = encode_stmf(&clip(), Dtype::F64);
        b[4] = 9;
        assert!(decode_stmf(&b, Path::new("x")).unwrap_err().to_string().contains("unknown version 9"));
        b[0] = b'X';
        assert!(decode_stmf(&b, Path::new("x")).unwrap_err().to_string().contains("magic"));
    }
}
