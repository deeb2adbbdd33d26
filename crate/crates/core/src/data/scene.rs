use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::video::VideoTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectShape {
    Square(usize),
    Rect { height: usize, width: usize },
}

impl ObjectShape {
    pub fn extents(self) -> (usize, usize) {
        match self {
            ObjectShape::Square(s) => (s, s),
            ObjectShape::Rect { height, width } => (height, width),
        }
    }
}

/// A rectangle moving at constant velocity on a periodic canvas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub shape: ObjectShape,
    pub intensity: f64,
    /// Pixels per frame; fractional speeds are rendered with area coverage.
    pub speed: f64,
    /// Direction of travel as `(dy, dx)`; normalised on use.
    pub direction: (f64, f64),
    /// Top-left corner at frame 0, `(y, x)`.
    pub start: (f64, f64),
}

impl SceneObject {
    /// `(dy, dx)` displacement per frame.
    pub fn velocity(&self) -> (f64, f64) {
        let (dy, dx) = self.direction;
        let n = (dy * dy + dx * dx).sqrt();
        if n == 0.0 || self.speed == 0.0 {
            return (0.0, 0.0);
        }
        (self.speed * dy / n, self.speed * dx / n)
    }

    /// Top-left corner at frame `t`, before wrapping.
    pub fn position(&self, t: usize) -> (f64, f64) {
        let (vy, vx) = self.velocity();
        (self.start.0 + vy * t as f64, self.start.1 + vx * t as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    /// `(H, W)`.
    pub canvas: (usize, usize),
    pub frames: usize,
    pub background: f64,
    pub objects: Vec<SceneObject>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.canvas;
        if h < 2 || w < 2 || self.frames < 1 {
            return Err(Error::contract(
                "render_clip",
                format!("canvas {h}x{w} with {} frames is not a valid clip", self.frames),
            ));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.background) {
            return Err(Error::contract("render_clip", format!("background {} outside [0, 1]", self.background)));
        }
        for (i, o) in self.objects.iter().enumerate() {
            let (oh, ow) = o.shape.extents();
            if oh == 0 || ow == 0 || oh > h || ow > w {
                return Err(Error::contract(
                    "render_clip",
                    format!("object {i} of {oh}x{ow} does not fit the {h}x{w} canvas"),
                ));
            }
            if !unit(o.intensity) {
                return Err(Error::contract("render_clip", format!("object {i} intensity {} outside [0, 1]", o.intensity)));
            }
            let finite = o.speed.is_finite() && o.start.0.is_finite() && o.start.1.is_finite();
            if !finite || o.speed < 0.0 {
                return Err(Error::contract("render_clip", format!("object {i} has invalid motion")));
            }
        }
        Ok(())
    }
}

/// Length of `[a, a + len)` ∩ `[cell, cell + 1)` on a circle of size `n`.
fn periodic_overlap(cell: usize, a: f64, len: usize, n: usize) -> f64 {
    let nf = n as f64;
    let a = a.rem_euclid(nf);
    let c = cell as f64;
    let mut total = 0.0;
    for shift in [-nf, 0.0, nf] {
        let lo = (a + shift).max(c);
        let hi = (a + shift + len as f64).min(c + 1.0);
        if hi > lo {
            total += hi - lo;
        }
    }
    total.min(1.0)
}

/// Fraction of each pixel covered by `obj` at frame `t`, row-major `H × W`.
pub fn coverage(obj: &SceneObject, canvas: (usize, usize), t: usize) -> Vec<f64> {
    let (h, w) = canvas;
    let (oh, ow) = obj.shape.extents();
    let (y, x) = obj.position(t);
    let rows: Vec<f64> = (0..h).map(|i| periodic_overlap(i, y, oh, h)).collect();
    let cols: Vec<f64> = (0..w).map(|j| periodic_overlap(j, x, ow, w)).collect();
    rows.iter().flat_map(|r| cols.iter().map(move |c| r * c)).collect()
}

/// Rasterises the scene into a single-channel clip. Objects are composited
/// in order over the background, each pixel blended by its coverage.
pub fn render_clip(spec: &SceneSpec) -> Result<VideoTensor> {
    spec.validate()?;
    let (h, w) = spec.canvas;
    let mut data = Vec::with_capacity(spec.frames * h * w);
    for t in 0..spec.frames {
        let mut frame = vec![spec.background; h * w];
        for obj in &spec.objects {
            for (px, cov) in frame.iter_mut().zip(coverage(obj, spec.canvas, t)) {
                *px = *px * (1.0 - cov) + obj.intensity * cov;
            }
        }
        data.extend(frame.into_iter().map(|v| v.clamp(0.0, 1.0)));
    }
    VideoTensor::new(Tensor::new(&[spec.frames, h, w, 1], data)?)
}

/// Scene families used for datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// One slow (1 px/frame) and one fast (3 px/frame) square moving along
    /// the same axis in disjoint lanes, so they never overlap.
    TwoSpeed,
    /// Two squares at rest.
    Static,
    /// Two or three rectangles with random fractional velocities.
    Random,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-speed" => Ok(Preset::TwoSpeed),
            "static" => Ok(Preset::Static),
            "random" => Ok(Preset::Random),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected two-speed, static or random"
            ))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::TwoSpeed => "two-speed",
            Preset::Static => "static",
            Preset::Random => "random",
        })
    }
}

/// Canvas, length and appearance shared by all presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetParams {
    pub canvas: (usize, usize),
    pub frames: usize,
    pub background: f64,
    pub intensity: f64,
    pub object_size: usize,
    pub slow_speed: f64,
    pub fast_speed: f64,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            canvas: (32, 32),
            frames: 16,
            background: 0.0,
            intensity: 1.0,
            object_size: 5,
            slow_speed: 1.0,
            fast_speed: 3.0,
        }
    }
}

impl Preset {
    /// Draws one scene. The object order is fixed: for `TwoSpeed` the slow
    /// object comes first.
    pub fn sample(self, params: &PresetParams, seed: u64) -> SceneSpec {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = params.canvas;
        let size = params.object_size;
        let objects = match self {
            Preset::TwoSpeed | Preset::Static => {
                let vertical = rng.gen_bool(0.5);
                let (along, across) = if vertical { (h, w) } else { (w, h) };
                // Two lanes across the motion axis that do not overlap.
                let lane_a = rng.gen_range(0..=across - 2 * size);
                let lane_b = rng.gen_range(lane_a + size..=across - size);
                let (slow_lane, fast_lane) = if rng.gen_bool(0.5) { (lane_a, lane_b) } else { (lane_b, lane_a) };
                let mut make = |lane: usize, speed: f64| {
                    let pos = rng.gen_range(0..along) as f64;
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let (direction, start) = if vertical {
                        ((sign, 0.0), (pos, lane as f64))
                    } else {
                        ((0.0, sign), (lane as f64, pos))
                    };
                    SceneObject {
                        shape: ObjectShape::Square(size),
                        intensity: params.intensity,
                        speed: if self == Preset::Static { 0.0 } else { speed },
                        direction,
                        start,
                    }
                };
                vec![make(slow_lane, params.slow_speed), make(fast_lane, params.fast_speed)]
            }
            Preset::Random => {
                let n = rng.gen_range(2..=3);
                (0..n)
                    .map(|_| {
                        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                        let height = rng.gen_range(3..=size + 2).min(h);
                        let width = rng.gen_range(3..=size + 2).min(w);
                        SceneObject {
                            shape: ObjectShape::Rect { height, width },
                            intensity: rng.gen_range(0.4..=1.0) * params.intensity.max(0.4),
                            speed: rng.gen_range(0.0..params.fast_speed),
                            direction: (angle.sin(), angle.cos()),
                            start: (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64)),
                        }
                    })
                    .collect()
            }
        };
        SceneSpec {
            canvas: params.canvas,
            frames: params.frames,
            background: params.background,
            objects,
            seed,
        }
    }
}

/// Level-1 temporal detail energy of a single-channel clip, restricted per
/// pair of frames `(2k, 2k+1)` to the pixels `obj` touches in either frame.
/// Returns `(energy, mask pixel count)`, both summed over pairs.
pub fn detail_energy_over_object(
    high: &Tensor,
    obj: &SceneObject,
    canvas: (usize, usize),
) -> (f64, usize) {
    let (h, w) = canvas;
    let pairs = high.shape()[0];
    let mut energy = 0.0;
    let mut count = 0;
    for k in 0..pairs {
        let a = coverage(obj, canvas, 2 * k);
        let b = coverage(obj, canvas, 2 * k + 1);
        for p in 0..h * w {
            if a[p] > 0.0 || b[p] > 0.0 {
                let v = high.data()[k * h * w + p];
                energy += v * v;
                count += 1;
            }
        }
    }
    (energy, count)
}
