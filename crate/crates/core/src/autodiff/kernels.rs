//! Forward and adjoint kernels for the spatial ops on `(H, W, C)` tensors.
//!
//! Convolutions go through im2col and a GEMM. The column matrix has one row
//! per output pixel and `kh·kw·Cin` columns, which lines up with the
//! row-major `(kh, kw, Cin, Cout)` kernel layout.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    /// Geometry of a convolution of `input` `(H, W, Cin)` with `kernel`
    /// `(kh, kw, Cin, Cout)`.
    pub fn new(op: &'static str, input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if input.len() != 3 {
            return Err(Error::contract(op, format!("input must be (H, W, C), got {input:?}")));
        }
        if kernel.len() != 4 {
            return Err(Error::contract(
                op,
                format!("kernel must be (kh, kw, Cin, Cout), got {kernel:?}"),
            ));
        }
        let (h, w, cin) = (input[0], input[1], input[2]);
        let (kh, kw, kcin, cout) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::contract(op, format!("kernel extents must be odd, got {kh}x{kw}")));
        }
        if kcin != cin {
            return Err(Error::contract(
                op,
                format!("kernel expects {kcin} input channels, input has {cin}"),
            ));
        }
        if stride == 0 {
            return Err(Error::contract(op, "stride must be at least 1"));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::contract(
                op,
                format!("{h}x{w} input with padding {pad} is smaller than the {kh}x{kw} kernel"),
            ));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        Ok(ConvGeom {
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            stride,
            pad,
            ho,
            wo,
        })
    }

    fn patch(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    /// Source pixel for output pixel (oy, ox) and kernel tap (ky, kx), or
    /// `None` if it falls in the zero padding.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky) as isize - self.pad as isize;
        let x = (ox * self.stride + kx) as isize - self.pad as isize;
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            None
        } else {
            Some((y as usize, x as usize))
        }
    }
}

fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let patch = g.patch();
    let mut cols = vec![0.0; g.ho * g.wo * patch];
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let row = &mut cols[(oy * g.wo + ox) * patch..][..patch];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    if let Some((y, xx)) = g.source(oy, ox, ky, kx) {
                        let dst = (ky * g.kw + kx) * g.cin;
                        let src = (y * g.w + xx) * g.cin;
                        row[dst..dst + g.cin].copy_from_slice(&x[src..src + g.cin]);
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let patch = g.patch();
    let mut x = vec![0.0; g.h * g.w * g.cin];
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let row = &cols[(oy * g.wo + ox) * patch..][..patch];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    if let Some((y, xx)) = g.source(oy, ox, ky, kx) {
                        let src = (ky * g.kw + kx) * g.cin;
                        let dst = (y * g.w + xx) * g.cin;
                        for c in 0..g.cin {
                            x[dst + c] += row[src + c];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Row-major matrix view for [`gemm`]: `rows x cols`, optionally transposed.
struct Mat<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    transposed: bool,
}

impl<'a> Mat<'a> {
    fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Mat {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    fn t(self) -> Self {
        Mat {
            transposed: !self.transposed,
            ..self
        }
    }

    fn shape(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out (+)= a · b` with row-major output.
fn gemm(a: Mat<'_>, b: Mat<'_>, out: &mut [f64], accumulate: bool) {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "gemm inner dimensions");
    assert_eq!(out.len(), m * n, "gemm output size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the pointers come from slices whose lengths were checked against
    // the stated dimensions and strides above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn conv2d(x: &Tensor, k: &Tensor, bias: Option<&Tensor>, g: &ConvGeom) -> Tensor {
    let cols = im2col(x.data(), g);
    let mut out = vec![0.0; g.ho * g.wo * g.cout];
    gemm(
        Mat::new(&cols, g.ho * g.wo, g.patch()),
        Mat::new(k.data(), g.patch(), g.cout),
        &mut out,
        false,
    );
    if let Some(b) = bias {
        add_channel_bias(&mut out, b.data());
    }
    Tensor::from_parts(vec![g.ho, g.wo, g.cout], out)
}

/// Gradient of a convolution w.r.t. its input: the transposed convolution of
/// `grad` `(Ho, Wo, Cout)` back to `(H, W, Cin)`.
pub(crate) fn conv2d_input_grad(grad: &Tensor, k: &Tensor, g: &ConvGeom) -> Tensor {
    let mut cols = vec![0.0; g.ho * g.wo * g.patch()];
    gemm(
        Mat::new(grad.data(), g.ho * g.wo, g.cout),
        Mat::new(k.data(), g.patch(), g.cout).t(),
        &mut cols,
        false,
    );
    Tensor::from_parts(vec![g.h, g.w, g.cin], col2im(&cols, g))
}

/// Gradient of a convolution w.r.t. its kernel, given the convolution input
/// `x` and the output gradient.
pub(crate) fn conv2d_kernel_grad(x: &Tensor, grad: &Tensor, g: &ConvGeom) -> Tensor {
    let cols = im2col(x.data(), g);
    let mut out = vec![0.0; g.patch() * g.cout];
    gemm(
        Mat::new(&cols, g.ho * g.wo, g.patch()).t(),
        Mat::new(grad.data(), g.ho * g.wo, g.cout),
        &mut out,
        false,
    );
    Tensor::from_parts(vec![g.kh, g.kw, g.cin, g.cout], out)
}

pub(crate) fn add_channel_bias(out: &mut [f64], bias: &[f64]) {
    for px in out.chunks_exact_mut(bias.len()) {
        for (v, b) in px.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

pub(crate) fn channel_sums(grad: &Tensor, channels: usize) -> Tensor {
    let mut s = vec![0.0; channels];
    for px in grad.data().chunks_exact(channels) {
        for (acc, v) in s.iter_mut().zip(px) {
            *acc += v;
        }
    }
    Tensor::from_parts(vec![channels], s)
}

pub(crate) fn avg_pool2(x: &Tensor) -> Tensor {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (ho, wo) = (h / 2, w / 2);
    let src = x.data();
    let mut out = vec![0.0; ho * wo * c];
    for oy in 0..ho {
        for ox in 0..wo {
            let dst = (oy * wo + ox) * c;
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let s = ((2 * oy + dy) * w + 2 * ox + dx) * c;
                for ch in 0..c {
                    out[dst + ch] += 0.25 * src[s + ch];
                }
            }
        }
    }
    Tensor::from_parts(vec![ho, wo, c], out)
}

/// Adjoint of [`avg_pool2`]: each output gradient spreads a quarter to its
/// four sources.
pub(crate) fn avg_pool2_adjoint(grad: &Tensor) -> Tensor {
    let mut up = upsample_nearest2(grad);
    up.data_mut().iter_mut().for_each(|v| *v *= 0.25);
    up
}

pub(crate) fn upsample_nearest2(x: &Tensor) -> Tensor {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (ho, wo) = (2 * h, 2 * w);
    let src = x.data();
    let mut out = vec![0.0; ho * wo * c];
    for y in 0..ho {
        for xx in 0..wo {
            let s = ((y / 2) * w + xx / 2) * c;
            let d = (y * wo + xx) * c;
            out[d..d + c].copy_from_slice(&src[s..s + c]);
        }
    }
    Tensor::from_parts(vec![ho, wo, c], out)
}

/// Adjoint of [`upsample_nearest2`]: sums each 2x2 block.
pub(crate) fn upsample_nearest2_adjoint(grad: &Tensor) -> Tensor {
    let mut pooled = avg_pool2(grad);
    pooled.data_mut().iter_mut().for_each(|v| *v *= 4.0);
    pooled
}
