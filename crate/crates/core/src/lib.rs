//! Spatial-temporal multi-frequency wavelet analysis for video prediction.
//!
//! The crate bundles a Mallat filter-bank wavelet engine, a small
//! reverse-mode autodiff engine, the image-domain and adversarial losses,
//! PSNR/SSIM, a toy generator/discriminator pair with spatial and temporal
//! wavelet analysis modules, a synthetic moving-shapes data generator and
//! the `stmfa` command-line tool that drives all of it.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod video;
pub mod wavelet;

pub use error::{Error, Result};
pub use tensor::Tensor;
pub use video::VideoTensor;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/wavelets.md")]
    mod wavelets {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/losses.md")]
    mod losses {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
