//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the crate's numerical kernels.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stmfa::wavelet::WaveletFilter;
use stmfa::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub type Matrix = Vec<Vec<f64>>;

/// Orthonormal Haar analysis matrix for length `n`: rows `0..n/2` are
/// `(x[2k] + x[2k+1])/√2`, rows `n/2..n` are `(x[2k] − x[2k+1])/√2`.
pub fn haar_matrix(n: usize) -> Matrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = vec![vec![0.0; n]; n];
    for k in 0..n / 2 {
        m[k][2 * k] = s;
        m[k][2 * k + 1] = s;
        m[n / 2 + k][2 * k] = s;
        m[n / 2 + k][2 * k + 1] = -s;
    }
    m
}

/// Dense periodic analysis matrix assembled tap by tap from a filter's
/// decomposition pair, aligned so that output `k` is centred on `2k + 1`.
pub fn filter_matrix(n: usize, f: &WaveletFilter) -> Matrix {
    let mut m = vec![vec![0.0; n]; n];
    for k in 0..n / 2 {
        for (j, (&lo, &hi)) in f.dec_lo.iter().zip(&f.dec_hi).enumerate() {
            let col = (2 * k + 1 + n * f.dec_lo.len() - j) % n;
            m[k][col] += lo;
            m[n / 2 + k][col] += hi;
        }
    }
    m
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca, rb, cb) = (a.len(), a[0].len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; ca * cb]; ra * rb];
    for i in 0..ra {
        for j in 0..ca {
            for k in 0..rb {
                for l in 0..cb {
                    out[i * rb + k][j * cb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// 2-D transform of a single-channel `h × w` image through one Kronecker
/// product `A_h ⊗ A_w` acting on the row-major vectorisation. Returns
/// `(LL, LH, HL, HH)` as row-major `h/2 × w/2` arrays, where the first
/// letter is the width (row) filter and the second the height filter.
pub fn kron_dwt2d(image: &[f64], h: usize, w: usize, ah: &Matrix, aw: &Matrix) -> [Vec<f64>; 4] {
    let y = matvec(&kron(ah, aw), image);
    let (h2, w2) = (h / 2, w / 2);
    let block = |row_hi: bool, col_hi: bool| {
        let mut out = Vec::with_capacity(h2 * w2);
        for i in 0..h2 {
            for j in 0..w2 {
                let r = i + if row_hi { h2 } else { 0 };
                let c = j + if col_hi { w2 } else { 0 };
                out.push(y[r * w + c]);
            }
        }
        out
    };
    [block(false, false), block(false, true), block(true, false), block(true, true)]
}

/// Applies `dwt1d` pixel by pixel along time with explicit loops.
pub fn temporal_loop(video: &Tensor, f: &WaveletFilter) -> (Vec<f64>, Vec<f64>) {
    let s = video.shape();
    let (t, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut low = vec![0.0; t / 2 * h * w * c];
    let mut high = vec![0.0; t / 2 * h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let series: Vec<f64> = (0..t).map(|k| video.at(&[k, y, x, ch])).collect();
                let (a, d) = stmfa::wavelet::dwt1d(&series, f).unwrap();
                for k in 0..t / 2 {
                    let idx = ((k * h + y) * w + x) * c + ch;
                    low[idx] = a[k];
                    high[idx] = d[k];
                }
            }
        }
    }
    (low, high)
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Reference SSIM by direct double loops. `window` is `None` for the
/// 11×11 Gaussian (σ = 1.5, valid positions only) or `Some(8)` for
/// non-overlapping 8×8 blocks.
pub fn ssim_naive(a: &[f64], b: &[f64], h: usize, w: usize, peak: f64, block: Option<usize>) -> f64 {
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);
    let (size, stride, weights): (usize, usize, Vec<f64>) = match block {
        Some(b) => (b, b, vec![1.0 / (b * b) as f64; b * b]),
        None => {
            let mut g = Vec::with_capacity(121);
            for i in 0..11 {
                for j in 0..11 {
                    let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
                    g.push((-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp());
                }
            }
            let total: f64 = g.iter().sum();
            (11, 1, g.into_iter().map(|v| v / total).collect())
        }
    };
    let mut acc = 0.0;
    let mut count = 0usize;
    let mut i0 = 0;
    while i0 + size <= h {
        let mut j0 = 0;
        while j0 + size <= w {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let wt = weights[i * size + j];
                    ma += wt * a[(i0 + i) * w + j0 + j];
                    mb += wt * b[(i0 + i) * w + j0 + j];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let wt = weights[i * size + j];
                    let da = a[(i0 + i) * w + j0 + j] - ma;
                    let db = b[(i0 + i) * w + j0 + j] - mb;
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
            }
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
            j0 += stride;
        }
        i0 += stride;
    }
    acc / count as f64
}
