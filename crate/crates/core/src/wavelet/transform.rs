//! Single-level filter-bank transforms under periodic boundary extension.
//!
//! Analysis convolves with the decomposition taps and keeps every second
//! sample:
//!
//! ```text
//! approx[k] = Σₙ dec_lo[n] · x[(2k + 1 − n) mod N]
//! detail[k] = Σₙ dec_hi[n] · x[(2k + 1 − n) mod N]
//! ```
//!
//! Synthesis upsamples and convolves with the reconstruction taps. For the
//! orthonormal families shipped here synthesis is also the adjoint of
//! analysis; [`Mode::Adjoint`] computes that transpose directly from the
//! decomposition taps so the autodiff layer does not rely on orthonormality.

use crate::error::{Error, Result};
use crate::tensor::{axis_split, Tensor};

use super::WaveletFilter;

/// How to map (approx, detail) back to the signal domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Synthesis filter bank, the exact inverse of analysis.
    Inverse,
    /// Transpose of the analysis operator.
    Adjoint,
}

fn analyze_into(x: &[f64], filter: &WaveletFilter, lo: &mut [f64], hi: &mut [f64]) {
    let n = x.len() as isize;
    for k in 0..lo.len() {
        let base = 2 * k as isize + 1;
        let (mut a, mut d) = (0.0, 0.0);
        for (t, (&fl, &fh)) in filter.dec_lo.iter().zip(&filter.dec_hi).enumerate() {
            let v = x[(base - t as isize).rem_euclid(n) as usize];
            a += fl * v;
            d += fh * v;
        }
        lo[k] = a;
        hi[k] = d;
    }
}

fn synthesize_into(lo: &[f64], hi: &[f64], filter: &WaveletFilter, mode: Mode, out: &mut [f64]) {
    let n = out.len() as isize;
    out.iter_mut().for_each(|v| *v = 0.0);
    match mode {
        Mode::Inverse => {
            let len = filter.len() as isize;
            for k in 0..lo.len() {
                let base = 2 * k as isize + 2 - len;
                for (j, (&rl, &rh)) in filter.rec_lo.iter().zip(&filter.rec_hi).enumerate() {
                    let m = (base + j as isize).rem_euclid(n) as usize;
                    out[m] += rl * lo[k] + rh * hi[k];
                }
            }
        }
        Mode::Adjoint => {
            for k in 0..lo.len() {
                let base = 2 * k as isize + 1;
                for (t, (&fl, &fh)) in filter.dec_lo.iter().zip(&filter.dec_hi).enumerate() {
                    let m = (base - t as isize).rem_euclid(n) as usize;
                    out[m] += fl * lo[k] + fh * hi[k];
                }
            }
        }
    }
}

/// One analysis level of a 1-D signal. The length must be even and ≥ 2.
pub fn dwt1d(signal: &[f64], filter: &WaveletFilter) -> Result<(Vec<f64>, Vec<f64>)> {
    check_even("dwt1d", signal.len())?;
    let half = signal.len() / 2;
    let (mut lo, mut hi) = (vec![0.0; half], vec![0.0; half]);
    analyze_into(signal, filter, &mut lo, &mut hi);
    Ok((lo, hi))
}

/// Inverse of [`dwt1d`].
pub fn idwt1d(approx: &[f64], detail: &[f64], filter: &WaveletFilter) -> Result<Vec<f64>> {
    synthesize1d(approx, detail, filter, Mode::Inverse)
}

pub fn synthesize1d(
    approx: &[f64],
    detail: &[f64],
    filter: &WaveletFilter,
    mode: Mode,
) -> Result<Vec<f64>> {
    if approx.len() != detail.len() || approx.is_empty() {
        return Err(Error::contract(
            "idwt1d",
            format!(
                "approx/detail lengths must be equal and non-zero, got {} and {}",
                approx.len(),
                detail.len()
            ),
        ));
    }
    let mut out = vec![0.0; 2 * approx.len()];
    synthesize_into(approx, detail, filter, mode, &mut out);
    Ok(out)
}

fn check_even(op: &'static str, n: usize) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::contract(
            op,
            format!("length must be even and at least 2, got {n}"),
        ));
    }
    Ok(())
}

/// Applies one analysis level along `axis`, halving that extent.
pub fn analyze_axis(t: &Tensor, axis: usize, filter: &WaveletFilter) -> Result<(Tensor, Tensor)> {
    let (outer, n, inner) = axis_split(t.shape(), axis);
    check_even("analyze_axis", n)?;
    let half = n / 2;
    let mut shape = t.shape().to_vec();
    shape[axis] = half;
    let mut lo = vec![0.0; outer * half * inner];
    let mut hi = vec![0.0; outer * half * inner];
    let mut line = vec![0.0; n];
    let (mut lo_line, mut hi_line) = (vec![0.0; half], vec![0.0; half]);
    let src = t.data();
    for o in 0..outer {
        for i in 0..inner {
            for (k, v) in line.iter_mut().enumerate() {
                *v = src[(o * n + k) * inner + i];
            }
            analyze_into(&line, filter, &mut lo_line, &mut hi_line);
            for k in 0..half {
                let dst = (o * half + k) * inner + i;
                lo[dst] = lo_line[k];
                hi[dst] = hi_line[k];
            }
        }
    }
    Ok((
        Tensor::from_parts(shape.clone(), lo),
        Tensor::from_parts(shape, hi),
    ))
}

/// Inverse (or adjoint) of [`analyze_axis`], doubling the extent of `axis`.
pub fn synthesize_axis(
    lo: &Tensor,
    hi: &Tensor,
    axis: usize,
    filter: &WaveletFilter,
    mode: Mode,
) -> Result<Tensor> {
    if lo.shape() != hi.shape() {
        return Err(Error::contract(
            "synthesize_axis",
            format!("band shapes differ: {:?} vs {:?}", lo.shape(), hi.shape()),
        ));
    }
    let (outer, half, inner) = axis_split(lo.shape(), axis);
    let n = 2 * half;
    let mut shape = lo.shape().to_vec();
    shape[axis] = n;
    let mut out = vec![0.0; outer * n * inner];
    let (mut lo_line, mut hi_line) = (vec![0.0; half], vec![0.0; half]);
    let mut line = vec![0.0; n];
    for o in 0..outer {
        for i in 0..inner {
            for k in 0..half {
                let src = (o * half + k) * inner + i;
                lo_line[k] = lo.data()[src];
                hi_line[k] = hi.data()[src];
            }
            synthesize_into(&lo_line, &hi_line, filter, mode, &mut line);
            for (k, v) in line.iter().enumerate() {
                out[(o * n + k) * inner + i] = *v;
            }
        }
    }
    Ok(Tensor::from_parts(shape, out))
}

/// The four sub-bands of one spatial level, each `(H/2, W/2, C)`.
///
/// `lh` is high-pass along the width (responds to vertical edges), `hl` is
/// high-pass along the height, `hh` is high-pass along both.
#[derive(Debug, Clone, PartialEq)]
pub struct SubBands {
    pub ll: Tensor,
    pub lh: Tensor,
    pub hl: Tensor,
    pub hh: Tensor,
}

impl SubBands {
    pub fn names() -> [&'static str; 4] {
        ["LL", "LH", "HL", "HH"]
    }

    pub fn bands(&self) -> [&Tensor; 4] {
        [&self.ll, &self.lh, &self.hl, &self.hh]
    }
}

fn check_image(op: &'static str, image: &Tensor) -> Result<()> {
    if image.rank() != 3 {
        return Err(Error::contract(
            op,
            format!("expected (H, W, C) image, got shape {:?}", image.shape()),
        ));
    }
    let (h, w) = (image.shape()[0], image.shape()[1]);
    if h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::contract(
            op,
            format!("extents must be even and at least 2, got {h}x{w}"),
        ));
    }
    Ok(())
}

/// Separable single-level 2-D transform of an `(H, W, C)` image, channel by channel.
pub fn dwt2d_spatial(image: &Tensor, filter: &WaveletFilter) -> Result<SubBands> {
    check_image("dwt2d_spatial", image)?;
    let (row_lo, row_hi) = analyze_axis(image, 1, filter)?;
    let (ll, hl) = analyze_axis(&row_lo, 0, filter)?;
    let (lh, hh) = analyze_axis(&row_hi, 0, filter)?;
    Ok(SubBands { ll, lh, hl, hh })
}

/// Inverse of [`dwt2d_spatial`].
pub fn idwt2d_spatial(bands: &SubBands, filter: &WaveletFilter) -> Result<Tensor> {
    synthesize2d(bands, filter, Mode::Inverse)
}

pub fn synthesize2d(bands: &SubBands, filter: &WaveletFilter, mode: Mode) -> Result<Tensor> {
    let shape = bands.ll.shape();
    if shape.len() != 3 || bands.bands().iter().any(|b| b.shape() != shape) {
        return Err(Error::contract(
            "idwt2d_spatial",
            "sub-bands must share one (H, W, C) shape",
        ));
    }
    let row_lo = synthesize_axis(&bands.ll, &bands.hl, 0, filter, mode)?;
    let row_hi = synthesize_axis(&bands.lh, &bands.hh, 0, filter, mode)?;
    synthesize_axis(&row_lo, &row_hi, 1, filter, mode)
}

fn check_clip(op: &'static str, video: &Tensor) -> Result<()> {
    if video.rank() != 4 {
        return Err(Error::contract(
            op,
            format!("expected (T, H, W, C) clip, got shape {:?}", video.shape()),
        ));
    }
    let t = video.shape()[0];
    if t < 2 || !t.is_multiple_of(2) {
        return Err(Error::contract(
            op,
            format!("frame count must be even and at least 2, got {t}"),
        ));
    }
    Ok(())
}

/// One level along the time axis of a `(T, H, W, C)` clip: every pixel's time
/// series goes through [`dwt1d`]. Returns (low, high), `T/2` frames each.
pub fn dwt_temporal(video: &Tensor, filter: &WaveletFilter) -> Result<(Tensor, Tensor)> {
    check_clip("dwt_temporal", video)?;
    analyze_axis(video, 0, filter)
}

pub fn idwt_temporal(low: &Tensor, high: &Tensor, filter: &WaveletFilter) -> Result<Tensor> {
    if low.rank() != 4 {
        return Err(Error::contract("idwt_temporal", "expected rank-4 bands"));
    }
    synthesize_axis(low, high, 0, filter, Mode::Inverse)
}
