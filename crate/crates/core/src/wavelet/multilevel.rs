//! Mallat pyramids: the low band is transformed again at each level and only
//! the deepest low band is kept alongside every level's detail bands.
//!
//! Extents that are not even are padded by repeating the final row, column or
//! frame. The padded extents are recorded so the inverse can truncate back.

use crate::error::{Error, Result};
use crate::tensor::{axis_split, Tensor};

use super::transform::{dwt2d_spatial, dwt_temporal, idwt2d_spatial, idwt_temporal, SubBands};
use super::WaveletFilter;

/// Repeats the last slice along `axis` until that extent equals `target`.
pub fn pad_edge(t: &Tensor, axis: usize, target: usize) -> Tensor {
    let (outer, n, inner) = axis_split(t.shape(), axis);
    if n >= target {
        return t.clone();
    }
    let mut shape = t.shape().to_vec();
    shape[axis] = target;
    let mut out = Vec::with_capacity(outer * target * inner);
    for o in 0..outer {
        let block = &t.data()[o * n * inner..(o + 1) * n * inner];
        out.extend_from_slice(block);
        let last = &block[(n - 1) * inner..];
        for _ in n..target {
            out.extend_from_slice(last);
        }
    }
    Tensor::from_parts(shape, out)
}

/// Keeps the first `target` slices along `axis`.
pub fn truncate(t: &Tensor, axis: usize, target: usize) -> Tensor {
    let (outer, n, inner) = axis_split(t.shape(), axis);
    if n == target {
        return t.clone();
    }
    let mut shape = t.shape().to_vec();
    shape[axis] = target;
    let mut out = Vec::with_capacity(outer * target * inner);
    for o in 0..outer {
        out.extend_from_slice(&t.data()[o * n * inner..(o * n + target) * inner]);
    }
    Tensor::from_parts(shape, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialLevel {
    /// Extents of this level's input before padding.
    pub input_extents: (usize, usize),
    pub lh: Tensor,
    pub hl: Tensor,
    pub hh: Tensor,
    /// Present only at the deepest level.
    pub ll: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialPyramid {
    pub levels: Vec<SpatialLevel>,
    pub original_extents: (usize, usize),
}

impl SpatialPyramid {
    pub fn deepest_ll(&self) -> &Tensor {
        self.levels
            .last()
            .and_then(|l| l.ll.as_ref())
            .expect("pyramid always keeps the deepest LL band")
    }

    pub fn squared_norm(&self) -> f64 {
        self.levels
            .iter()
            .map(|l| {
                l.lh.squared_norm()
                    + l.hl.squared_norm()
                    + l.hh.squared_norm()
                    + l.ll.as_ref().map_or(0.0, Tensor::squared_norm)
            })
            .sum()
    }
}

/// `levels`-deep spatial decomposition of an `(H, W, C)` image.
pub fn multilevel_spatial(
    image: &Tensor,
    filter: &WaveletFilter,
    levels: usize,
) -> Result<SpatialPyramid> {
    if image.rank() != 3 {
        return Err(Error::contract(
            "multilevel_spatial",
            format!("expected (H, W, C) image, got {:?}", image.shape()),
        ));
    }
    if levels == 0 {
        return Err(Error::contract("multilevel_spatial", "levels must be at least 1"));
    }
    let original_extents = (image.shape()[0], image.shape()[1]);
    let mut current = image.clone();
    let mut out = Vec::with_capacity(levels);
    for level in 1..=levels {
        let (h, w) = (current.shape()[0], current.shape()[1]);
        if h < 2 || w < 2 {
            return Err(Error::contract(
                "multilevel_spatial",
                format!("level {level} input is {h}x{w}; every level needs extents of at least 2"),
            ));
        }
        let padded = pad_edge(&pad_edge(&current, 0, h + h % 2), 1, w + w % 2);
        let SubBands { ll, lh, hl, hh } = dwt2d_spatial(&padded, filter)?;
        out.push(SpatialLevel {
            input_extents: (h, w),
            lh,
            hl,
            hh,
            ll: None,
        });
        current = ll;
    }
    out.last_mut().expect("levels >= 1").ll = Some(current);
    Ok(SpatialPyramid {
        levels: out,
        original_extents,
    })
}

pub fn inverse_multilevel_spatial(pyramid: &SpatialPyramid, filter: &WaveletFilter) -> Result<Tensor> {
    let mut current = pyramid.deepest_ll().clone();
    for level in pyramid.levels.iter().rev() {
        let bands = SubBands {
            ll: current,
            lh: level.lh.clone(),
            hl: level.hl.clone(),
            hh: level.hh.clone(),
        };
        let full = idwt2d_spatial(&bands, filter)?;
        let (h, w) = level.input_extents;
        current = truncate(&truncate(&full, 0, h), 1, w);
    }
    Ok(current)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalLevel {
    pub high: Tensor,
    /// Present only at the deepest level.
    pub low: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalBands {
    pub levels: Vec<TemporalLevel>,
    pub original_length: usize,
}

impl TemporalBands {
    pub fn deepest_low(&self) -> &Tensor {
        self.levels
            .last()
            .and_then(|l| l.low.as_ref())
            .expect("temporal bands always keep the deepest low band")
    }

    /// Frame counts of the retained bands, deepest low first.
    pub fn frame_counts(&self) -> Vec<usize> {
        let mut counts = vec![self.deepest_low().shape()[0]];
        counts.extend(self.levels.iter().rev().map(|l| l.high.shape()[0]));
        counts
    }

    pub fn padded_length(&self) -> usize {
        self.frame_counts().iter().sum()
    }

    /// All retained bands stacked along time: deepest low, deepest high, ...,
    /// finest high.
    pub fn stacked(&self) -> Tensor {
        let low = self.deepest_low();
        let mut shape = low.shape().to_vec();
        let mut data = low.data().to_vec();
        for level in self.levels.iter().rev() {
            data.extend_from_slice(level.high.data());
        }
        shape[0] = self.padded_length();
        Tensor::from_parts(shape, data)
    }

    pub fn squared_norm(&self) -> f64 {
        self.deepest_low().squared_norm()
            + self.levels.iter().map(|l| l.high.squared_norm()).sum::<f64>()
    }
}

/// Frame count after padding a clip of `t` frames: the next power of two,
/// and never fewer than 4.
pub fn padded_temporal_length(t: usize) -> usize {
    t.next_power_of_two().max(4)
}

/// Decomposes a `(T, H, W, C)` clip along time until the low band holds two
/// frames. `T` is first padded per [`padded_temporal_length`].
pub fn multilevel_temporal(video: &Tensor, filter: &WaveletFilter) -> Result<TemporalBands> {
    multilevel_temporal_capped(video, filter, usize::MAX)
}

/// As [`multilevel_temporal`], stopping after at most `max_levels` levels.
pub fn multilevel_temporal_capped(
    video: &Tensor,
    filter: &WaveletFilter,
    max_levels: usize,
) -> Result<TemporalBands> {
    if max_levels == 0 {
        return Err(Error::contract("multilevel_temporal", "levels must be at least 1"));
    }
    if video.rank() != 4 {
        return Err(Error::contract(
            "multilevel_temporal",
            format!("expected (T, H, W, C) clip, got {:?}", video.shape()),
        ));
    }
    let t = video.shape()[0];
    if t < 2 {
        return Err(Error::contract(
            "multilevel_temporal",
            format!("clip needs at least 2 frames, got {t}"),
        ));
    }
    let padded_len = padded_temporal_length(t);
    let mut current = pad_edge(video, 0, padded_len);
    let mut levels = Vec::new();
    while current.shape()[0] > 2 && levels.len() < max_levels {
        let (low, high) = dwt_temporal(&current, filter)?;
        levels.push(TemporalLevel { high, low: None });
        current = low;
    }
    levels.last_mut().expect("padded length >= 4").low = Some(current);
    Ok(TemporalBands {
        levels,
        original_length: t,
    })
}

pub fn inverse_multilevel_temporal(bands: &TemporalBands, filter: &WaveletFilter) -> Result<Tensor> {
    let mut current = bands.deepest_low().clone();
    for level in bands.levels.iter().rev() {
        current = idwt_temporal(&current, &level.high, filter)?;
    }
    Ok(truncate(&current, 0, bands.original_length))
}
