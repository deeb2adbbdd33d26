use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A clip of `T` frames, stored as a `(T, H, W, C)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    frames: Tensor,
    value_range: (f64, f64),
}

impl VideoTensor {
    /// Wraps a `(T, H, W, C)` tensor with the default `[0, 1]` range. Shape
    /// is validated; sample range is not (see [`VideoTensor::check_range`]).
    pub fn new(frames: Tensor) -> Result<Self> {
        Self::with_range(frames, (0.0, 1.0))
    }

    pub fn with_range(frames: Tensor, value_range: (f64, f64)) -> Result<Self> {
        let s = frames.shape();
        if s.len() != 4 || s[0] < 1 || s[1] < 2 || s[2] < 2 || s[3] < 1 {
            return Err(Error::contract(
                "VideoTensor",
                format!("expected (T>=1, H>=2, W>=2, C>=1), got {s:?}"),
            ));
        }
        if !(value_range.0 < value_range.1) {
            return Err(Error::contract(
                "VideoTensor",
                format!("empty value range {value_range:?}"),
            ));
        }
        Ok(VideoTensor { frames, value_range })
    }

    /// Stacks `(H, W, C)` frames along a new leading time axis.
    pub fn from_frames(frames: &[Tensor]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::contract("VideoTensor::from_frames", "no frames"))?;
        let fs = first.shape().to_vec();
        if fs.len() != 3 {
            return Err(Error::contract(
                "VideoTensor::from_frames",
                format!("frames must be (H, W, C), got {fs:?}"),
            ));
        }
        let mut data = Vec::with_capacity(first.len() * frames.len());
        for (i, f) in frames.iter().enumerate() {
            if f.shape() != fs.as_slice() {
                return Err(Error::contract(
                    "VideoTensor::from_frames",
                    format!("frame {i} has shape {:?}, expected {fs:?}", f.shape()),
                ));
            }
            data.extend_from_slice(f.data());
        }
        Self::new(Tensor::new(&[frames.len(), fs[0], fs[1], fs[2]], data)?)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.frames
    }

    pub fn into_tensor(self) -> Tensor {
        self.frames
    }

    pub fn value_range(&self) -> (f64, f64) {
        self.value_range
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(H, W, C)` of every frame.
    pub fn frame_shape(&self) -> [usize; 3] {
        let s = self.frames.shape();
        [s[1], s[2], s[3]]
    }

    fn frame_len(&self) -> usize {
        self.frame_shape().iter().product()
    }

    pub fn frame(&self, t: usize) -> Tensor {
        assert!(t < self.len(), "frame {t} out of range for {} frames", self.len());
        let n = self.frame_len();
        Tensor::new(&self.frame_shape(), self.frames.data()[t * n..(t + 1) * n].to_vec())
            .expect("frame of a valid clip")
    }

    /// Frames `start .. start + count` as a new clip.
    pub fn frames(&self, start: usize, count: usize) -> Result<VideoTensor> {
        if count == 0 || start + count > self.len() {
            return Err(Error::contract(
                "VideoTensor::frames",
                format!("range {start}..{} outside {} frames", start + count, self.len()),
            ));
        }
        let n = self.frame_len();
        let [h, w, c] = self.frame_shape();
        let t = Tensor::new(&[count, h, w, c], self.frames.data()[start * n..(start + count) * n].to_vec())?;
        Self::with_range(t, self.value_range)
    }

    /// Fails if any sample lies outside the value range.
    pub fn check_range(&self) -> Result<()> {
        let (lo, hi) = self.value_range;
        match self.frames.data().iter().position(|v| *v < lo || *v > hi) {
            None => Ok(()),
            Some(i) => Err(Error::contract(
                "VideoTensor",
                format!("sample {i} = {} outside [{lo}, {hi}]", self.frames.data()[i]),
            )),
        }
    }
}
