//! Frame quality metrics.
//!
//! [`psnr`] returns `f64::INFINITY` for identical frames. [`ssim`] averages
//! local SSIM over windows and over channels, with the usual constants
//! `C1 = (0.01·peak)²` and `C2 = (0.03·peak)²`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::video::VideoTensor;

pub const DEFAULT_PEAK: f64 = 1.0;

fn check_pair(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::contract(op, format!("shapes differ: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn mse(y: &Tensor, y_hat: &Tensor) -> Result<f64> {
    check_pair("mse", y, y_hat)?;
    let s: f64 = y.data().iter().zip(y_hat.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / y.len() as f64)
}

/// `10·log10(peak² / MSE)` in dB; `+∞` when the frames are identical.
pub fn psnr(y: &Tensor, y_hat: &Tensor, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::contract("psnr", format!("peak must be positive, got {peak}")));
    }
    let m = mse(y, y_hat)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SsimWindow {
    /// Sliding Gaussian window over every fully contained position.
    Gaussian { size: usize, sigma: f64 },
    /// Non-overlapping square blocks with uniform weights; partial blocks at
    /// the right and bottom edges are skipped.
    Block(usize),
}

impl Default for SsimWindow {
    fn default() -> Self {
        SsimWindow::Gaussian { size: 11, sigma: 1.5 }
    }
}

impl SsimWindow {
    fn size(&self) -> usize {
        match *self {
            SsimWindow::Gaussian { size, .. } | SsimWindow::Block(size) => size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: SsimWindow,
    pub peak: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: SsimWindow::default(),
            peak: DEFAULT_PEAK,
        }
    }
}

fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Valid-mode separable filtering of an `h × w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ho, wo) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * wo];
    for i in 0..h {
        for j in 0..wo {
            rows[i * wo + j] = taps.iter().enumerate().map(|(t, &c)| c * x[i * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for i in 0..ho {
        for j in 0..wo {
            out[i * wo + j] = taps.iter().enumerate().map(|(t, &c)| c * rows[(i + t) * wo + j]).sum();
        }
    }
    out
}

/// Uniform means over non-overlapping `b × b` blocks.
fn block_means(x: &[f64], h: usize, w: usize, b: usize) -> Vec<f64> {
    let (bh, bw) = (h / b, w / b);
    let mut out = vec![0.0; bh * bw];
    for (bi, row) in out.chunks_mut(bw).enumerate() {
        for (bj, cell) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..b {
                for j in 0..b {
                    s += x[(bi * b + i) * w + bj * b + j];
                }
            }
            *cell = s / (b * b) as f64;
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> f64 {
    let local = |x: &[f64]| match cfg.window {
        SsimWindow::Gaussian { size, sigma } => filter_valid(x, h, w, &gaussian_taps(size, sigma)),
        SsimWindow::Block(size) => block_means(x, h, w, size),
    };
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let (mu_a, mu_b) = (local(a), local(b));
    let (e_aa, e_bb, e_ab) = (local(&prod(a, a)), local(&prod(b, b)), local(&prod(a, b)));
    let c1 = (0.01 * cfg.peak).powi(2);
    let c2 = (0.03 * cfg.peak).powi(2);
    let n = mu_a.len();
    (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum::<f64>()
        / n as f64
}

/// Mean SSIM of two `(H, W, C)` frames, averaged over channels.
pub fn ssim(y: &Tensor, y_hat: &Tensor, cfg: &SsimConfig) -> Result<f64> {
    check_pair("ssim", y, y_hat)?;
    if y.rank() != 3 {
        return Err(Error::contract("ssim", format!("expected (H, W, C) frame, got {:?}", y.shape())));
    }
    let (h, w, c) = (y.shape()[0], y.shape()[1], y.shape()[2]);
    let size = cfg.window.size();
    if size == 0 || h < size || w < size {
        return Err(Error::contract(
            "ssim",
            format!("frame {h}x{w} is smaller than the {size}x{size} window"),
        ));
    }
    let plane = |t: &Tensor, ch: usize| t.data().iter().skip(ch).step_by(c).copied().collect::<Vec<_>>();
    let total: f64 = (0..c).map(|ch| ssim_plane(&plane(y, ch), &plane(y_hat, ch), h, w, cfg)).sum();
    Ok(total / c as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Per-frame PSNR and SSIM of a prediction against ground truth.
pub fn score_frames(truth: &VideoTensor, pred: &VideoTensor, cfg: &SsimConfig) -> Result<Vec<FrameScore>> {
    check_pair("score_frames", truth.tensor(), pred.tensor())?;
    (0..truth.len())
        .map(|t| {
            let (a, b) = (truth.frame(t), pred.frame(t));
            Ok(FrameScore {
                psnr_db: psnr(&a, &b, cfg.peak)?,
                ssim: ssim(&a, &b, cfg)?,
            })
        })
        .collect()
}

/// Mean of the finite values, `+∞` when every value is infinite.
pub fn mean_finite(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n, mut any) = (0.0, 0usize, false);
    for v in values {
        any = true;
        if v.is_finite() {
            sum += v;
            n += 1;
        }
    }
    match (n, any) {
        (0, true) => f64::INFINITY,
        (0, false) => f64::NAN,
        _ => sum / n as f64,
    }
}
