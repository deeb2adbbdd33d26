use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ConvLstmCell, Graph, NodeId, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::video::VideoTensor;
use crate::wavelet::padded_temporal_length;

use super::config::ModelConfig;
use super::layers::{uniform, Conv, Init};

/// Residual scale on the dense path of each encoder unit.
pub const RESIDUAL_SCALE: f64 = 0.2;

#[derive(Debug, Clone)]
struct RrdbUnit {
    conv1: Conv,
    conv2: Conv,
    /// 1x1 projection when the input width differs from the unit width.
    skip: Option<Conv>,
}

#[derive(Debug, Clone)]
struct Twam {
    conv1: Conv,
    conv2: Conv,
}

#[derive(Debug, Clone)]
struct Lstm {
    kernel: ParamId,
    bias: ParamId,
}

/// Recurrent state inside one graph.
///
/// Start every independent clip from [`Generator::initial_state`].
#[derive(Debug, Clone, Copy)]
pub struct GeneratorState {
    pub h: NodeId,
    pub c: NodeId,
    /// Frames encoded so far.
    pub step: usize,
}

/// Encoder (downsampling residual units with spatial wavelet branches and a
/// ConvLSTM), temporal wavelet branch, fusion and decoder.
#[derive(Debug, Clone)]
pub struct Generator {
    pub config: ModelConfig,
    pub store: ParamStore,
    units: Vec<RrdbUnit>,
    swam: Vec<Conv>,
    lstm: Lstm,
    twam: Option<Twam>,
    fuse: Conv,
    decoder: Vec<Conv>,
    out: Conv,
}

impl Generator {
    pub fn new(config: &ModelConfig) -> Result<Generator> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let mut store = ParamStore::new();
        let (c, base, hidden) = (config.channels, config.base_channels, config.lstm_hidden);

        let mut units = Vec::with_capacity(config.rrdb_units);
        for l in 0..config.rrdb_units {
            let cin = if l == 0 { c } else { base };
            let name = format!("gen.unit{l}");
            let conv1 = Conv::new(&mut store, &mut rng, &format!("{name}.conv1"), 3, cin, base, Init::He)?;
            let conv2 = Conv::new(&mut store, &mut rng, &format!("{name}.conv2"), 3, cin + base, base, Init::He)?;
            let skip = if cin != base {
                Some(Conv::new(&mut store, &mut rng, &format!("{name}.skip"), 1, cin, base, Init::Lecun)?)
            } else {
                None
            };
            units.push(RrdbUnit { conv1, conv2, skip });
        }

        let swam = if config.ablation.uses_swam() {
            (0..config.swam_levels)
                .map(|l| Conv::new(&mut store, &mut rng, &format!("gen.swam{l}.conv"), 3, 4 * c, base, Init::He))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };

        let fan_in = (9 * (base + hidden)) as f64;
        let kernel = store.add(
            "gen.lstm.w",
            uniform(&mut rng, &[3, 3, base + hidden, 4 * hidden], (3.0 / fan_in).sqrt()),
        )?;
        let mut b = Tensor::zeros(&[4 * hidden]);
        // forget gate starts open
        b.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let bias = store.add("gen.lstm.b", b)?;

        let twam = if config.ablation.uses_twam() {
            let bands = padded_temporal_length(config.input_frames) * c;
            Some(Twam {
                conv1: Conv::new(&mut store, &mut rng, "gen.twam.conv1", 3, bands, base, Init::He)?,
                conv2: Conv::new(&mut store, &mut rng, "gen.twam.conv2", 3, base, base, Init::He)?,
            })
        } else {
            None
        };

        let fuse = Conv::new(&mut store, &mut rng, "gen.fuse", 1, hidden + base, base, Init::Lecun)?;

        let mut decoder = Vec::with_capacity(config.rrdb_units);
        for l in 0..config.rrdb_units {
            decoder.push(Conv::new(&mut store, &mut rng, &format!("gen.dec{l}"), 3, base, base, Init::HeTransposed)?);
        }
        let out = Conv::new(&mut store, &mut rng, "gen.out", 3, base, c, Init::Lecun)?;

        Ok(Generator {
            config: config.clone(),
            store,
            units,
            swam,
            lstm: Lstm { kernel, bias },
            twam,
            fuse,
            decoder,
            out,
        })
    }

    fn latent_extents(&self, frame: &[usize]) -> (usize, usize) {
        let f = self.config.spatial_factor();
        (frame[0] / f, frame[1] / f)
    }

    /// Zero hidden and cell state for frames of shape `(H, W, C)`.
    pub fn initial_state(&self, g: &mut Graph, frame_shape: &[usize]) -> Result<GeneratorState> {
        self.config.check_frame(frame_shape)?;
        let (h, w) = self.latent_extents(frame_shape);
        let shape = [h, w, self.config.lstm_hidden];
        Ok(GeneratorState {
            h: g.constant(Tensor::zeros(&shape)),
            c: g.constant(Tensor::zeros(&shape)),
            step: 0,
        })
    }

    /// One downsampling residual unit: two 3x3 conv + leaky ReLU layers, the
    /// second seeing the unit input concatenated with the first's output,
    /// then `avg_pool2(skip + 0.2·y2)`.
    pub fn rrdb_unit(&self, g: &mut Graph, unit: usize, x: NodeId) -> Result<NodeId> {
        let u = &self.units[unit];
        let y1 = u.conv1.forward_lrelu(g, &self.store, x, 1)?;
        let xy = g.concat(&[x, y1], 2)?;
        let y2 = u.conv2.forward_lrelu(g, &self.store, xy, 1)?;
        let skip = match &u.skip {
            Some(p) => p.forward(g, &self.store, x, 1)?,
            None => x,
        };
        let r = g.scale(y2, RESIDUAL_SCALE)?;
        let sum = g.add(skip, r)?;
        g.avg_pool2(sum)
    }

    /// Spatial wavelet branch `level`: returns features matching the unit
    /// output and the LL band that feeds the next level.
    pub fn swam(&self, g: &mut Graph, level: usize, ll: NodeId) -> Result<(NodeId, NodeId)> {
        let conv = self.swam.get(level).ok_or_else(|| {
            Error::contract("swam", format!("no spatial wavelet branch {level} under ablation {}", self.config.ablation))
        })?;
        let bands = g.dwt_spatial(ll, self.config.wavelet)?;
        let features = conv.forward_lrelu(g, &self.store, bands, 1)?;
        let next = g.slice(bands, 2, 0, self.config.channels)?;
        Ok((features, next))
    }

    /// Encodes one `(H, W, C)` frame and advances the ConvLSTM.
    pub fn encode_step(&self, g: &mut Graph, frame: NodeId, state: GeneratorState) -> Result<GeneratorState> {
        self.config.check_frame(g.shape(frame))?;
        let mut x = frame;
        let mut ll = frame;
        for l in 0..self.units.len() {
            x = self.rrdb_unit(g, l, x)?;
            if !self.swam.is_empty() {
                let (f, next) = self.swam(g, l, ll)?;
                x = g.add(x, f)?;
                ll = next;
            }
        }
        let cell = ConvLstmCell {
            kernel: g.param(&self.store, self.lstm.kernel),
            bias: g.param(&self.store, self.lstm.bias),
        };
        let (h, c) = cell.step(g, x, state.h, state.c)?;
        Ok(GeneratorState { h, c, step: state.step + 1 })
    }

    /// Temporal wavelet features of the last `m` frames, at the LSTM scale.
    /// Ablations without the branch get zeros of the same shape.
    pub fn twam(&self, g: &mut Graph, buffer: &[NodeId]) -> Result<NodeId> {
        let m = self.config.input_frames;
        if buffer.len() != m {
            return Err(Error::contract("twam", format!("expected {m} buffered frames, got {}", buffer.len())));
        }
        let shape = g.shape(buffer[0]).to_vec();
        self.config.check_frame(&shape)?;
        let Some(p) = &self.twam else {
            let (h, w) = self.latent_extents(&shape);
            return Ok(g.constant(Tensor::zeros(&[h, w, self.config.base_channels])));
        };
        let mut framed = Vec::with_capacity(m);
        for &f in buffer {
            framed.push(g.reshape(f, &[1, shape[0], shape[1], shape[2]])?);
        }
        let clip = g.concat(&framed, 0)?;
        let bands = g.dwt_temporal(clip, self.config.wavelet)?;
        let stacked = g.frames_to_channels(bands)?;
        let mut x = p.conv1.forward_lrelu(g, &self.store, stacked, 1)?;
        x = g.avg_pool2(x)?;
        x = p.conv2.forward_lrelu(g, &self.store, x, 1)?;
        for _ in 1..self.config.rrdb_units {
            x = g.avg_pool2(x)?;
        }
        Ok(x)
    }

    /// Concatenates the hidden state with the temporal features and mixes
    /// them with a 1x1 convolution.
    pub fn fuse(&self, g: &mut Graph, h: NodeId, twam: NodeId) -> Result<NodeId> {
        let (hs, ts) = (g.shape(h), g.shape(twam));
        if hs.len() != 3 || ts.len() != 3 || hs[..2] != ts[..2] {
            return Err(Error::contract(
                "fuse",
                format!("hidden state {hs:?} and temporal features {ts:?} are not spatially aligned"),
            ));
        }
        let x = g.concat(&[h, twam], 2)?;
        self.fuse.forward(g, &self.store, x, 1)
    }

    /// Upsamples fused features back to a frame in `[0, 1]`.
    pub fn decode(&self, g: &mut Graph, fused: NodeId) -> Result<NodeId> {
        let mut x = fused;
        for conv in &self.decoder {
            let (h, w) = (g.shape(x)[0], g.shape(x)[1]);
            let k = g.param(&self.store, conv.weight);
            let b = g.param(&self.store, conv.bias);
            x = g.conv2d_transpose(x, k, Some(b), 2, 1, (2 * h, 2 * w))?;
            x = g.leaky_relu(x, super::layers::LEAKY_SLOPE)?;
        }
        let y = self.out.forward(g, &self.store, x, 1)?;
        g.sigmoid(y)
    }

    /// Warms up on `frames` (`m` nodes of shape `(H, W, C)`), then predicts
    /// `n` frames, feeding each prediction back and recomputing the temporal
    /// branch on the last `m` frames.
    pub fn rollout(&self, g: &mut Graph, frames: &[NodeId], n: usize) -> Result<Vec<NodeId>> {
        let m = self.config.input_frames;
        if frames.len() != m {
            return Err(Error::contract("rollout", format!("expected {m} input frames, got {}", frames.len())));
        }
        let shape = g.shape(frames[0]).to_vec();
        let mut state = self.initial_state(g, &shape)?;
        for &f in frames {
            state = self.encode_step(g, f, state)?;
        }
        let mut buffer = frames.to_vec();
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let tw = self.twam(g, &buffer[buffer.len() - m..])?;
            let fused = self.fuse(g, state.h, tw)?;
            let y = self.decode(g, fused)?;
            out.push(y);
            if k + 1 < n {
                state = self.encode_step(g, y, state)?;
                buffer.push(y);
            }
        }
        Ok(out)
    }

    /// Predicts `n` frames after the `m` frames of `x`.
    pub fn predict_sequence(&self, x: &VideoTensor, n: usize) -> Result<VideoTensor> {
        let mut g = Graph::new();
        let frames: Vec<NodeId> = (0..x.len()).map(|t| g.constant(x.frame(t))).collect();
        let preds = self.rollout(&mut g, &frames, n)?;
        let frames: Vec<Tensor> = preds.iter().map(|&p| g.value(p).clone()).collect();
        VideoTensor::from_frames(&frames)
    }
}
