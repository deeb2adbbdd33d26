//! Discrete wavelet transforms implemented as two-channel filter banks: 1-D,
//! separable 2-D over the spatial axes of a frame, and along the time axis of
//! a clip, each with multi-level pyramids and exact inverses.
//!
//! The differentiable wrappers used by the model live in
//! [`crate::autodiff::Graph::dwt_spatial`] and
//! [`crate::autodiff::Graph::dwt_temporal`].

mod filter;
mod multilevel;
mod transform;

pub use filter::{Family, WaveletFilter};
pub use multilevel::{
    inverse_multilevel_spatial, inverse_multilevel_temporal, multilevel_spatial,
    multilevel_temporal, multilevel_temporal_capped, pad_edge, padded_temporal_length, truncate, SpatialLevel,
    SpatialPyramid, TemporalBands, TemporalLevel,
};
pub use transform::{
    analyze_axis, dwt1d, dwt2d_spatial, dwt_temporal, idwt1d, idwt2d_spatial, idwt_temporal,
    synthesize1d, synthesize2d, synthesize_axis, Mode, SubBands,
};
