//! 8-bit binary PGM (P5) export of single-channel images.
//!
//! Samples are scaled by 255 and rounded half away from zero, so a constant
//! 0.5 frame becomes bytes of 128. With `normalize`, the image is first
//! mapped linearly from `[min, max]` to `[0, 1]` and the two constants are
//! written to a sidecar CSV (`<name>.norm.csv`) beside the image.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Plane extents of an `(H, W)` or `(H, W, 1)` tensor.
fn plane(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [h, w] | [h, w, 1] => Ok((*h, *w)),
        other => Err(Error::contract(
            "export_pgm",
            format!("expected a single-channel 2-D image, got shape {other:?}"),
        )),
    }
}

pub fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("norm.csv")
}

/// Encodes the image; returns the P5 bytes and the `(min, max)` used when
/// normalising.
pub fn encode_pgm(image: &Tensor, normalize: bool) -> Result<(Vec<u8>, Option<(f64, f64)>)> {
    let (h, w) = plane(image)?;
    let (lo, hi) = image
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    let range = hi - lo;
    out.extend(image.data().iter().map(|&v| {
        if !normalize {
            quantize(v)
        } else if range > 0.0 {
            quantize((v - lo) / range)
        } else {
            0
        }
    }));
    Ok((out, normalize.then_some((lo, hi))))
}

pub fn export_pgm(image: &Tensor, path: &Path, normalize: bool) -> Result<Option<(f64, f64)>> {
    let (bytes, norm) = encode_pgm(image, normalize)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    if let Some((lo, hi)) = norm {
        let side = sidecar_path(path);
        fs::write(&side, format!("min,max\n{lo:e},{hi:e}\n")).map_err(|e| Error::io(&side, e))?;
    }
    Ok(norm)
}

/// Reads an 8-bit P5 file into an `(H, W, 1)` tensor scaled to `[0, 1]`.
pub fn read_pgm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let fail = |offset: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg,
    };
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(fail(pos, "truncated PGM header".into()));
        }
        fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
    }
    if fields[0].1 != "P5" {
        return Err(fail(0, format!("bad magic {:?}, expected \"P5\"", fields[0].1)));
    }
    let num = |i: usize| {
        fields[i]
            .1
            .parse::<usize>()
            .map_err(|_| fail(fields[i].0, format!("bad header field {:?}", fields[i].1)))
    };
    let (w, h, max) = (num(1)?, num(2)?, num(3)?);
    if max != 255 {
        return Err(fail(fields[3].0, format!("only maxval 255 is supported, got {max}")));
    }
    pos += 1;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != w * h {
        return Err(fail(pos, format!("expected {} pixel bytes, found {}", w * h, payload.len())));
    }
    Tensor::new(&[h, w, 1], payload.iter().map(|&b| b as f64 / 255.0).collect())
}
