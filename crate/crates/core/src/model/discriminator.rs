use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, ParamStore};
use crate::error::{Error, Result};
use crate::video::VideoTensor;

use super::config::ModelConfig;
use super::layers::{Conv, Init};

pub const DISC_STAGES: usize = 4;

/// Scores a whole sequence `[X, Y]` with frames stacked on channels.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub store: ParamStore,
    frames: usize,
    channels: usize,
    convs: Vec<Conv>,
    dense: Conv,
}

impl Discriminator {
    pub fn new(config: &ModelConfig) -> Result<Discriminator> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(2);
        let mut store = ParamStore::new();
        let frames = config.input_frames + config.predict_frames;
        let width = config.base_channels;
        let mut convs = Vec::with_capacity(DISC_STAGES);
        let mut cin = frames * config.channels;
        for k in 0..DISC_STAGES {
            convs.push(Conv::new(&mut store, &mut rng, &format!("disc.conv{k}"), 3, cin, width, Init::He)?);
            cin = width;
        }
        let dense = Conv::new(&mut store, &mut rng, "disc.dense", 1, width, 1, Init::Lecun)?;
        Ok(Discriminator { store, frames, channels: config.channels, convs, dense })
    }

    /// Probability that `frames` (each `(H, W, C)`, observed then future) is
    /// real, as a `(1, 1, 1)` node.
    pub fn forward(&self, g: &mut Graph, frames: &[NodeId]) -> Result<NodeId> {
        if frames.len() != self.frames {
            return Err(Error::contract(
                "discriminate",
                format!("expected {} frames, got {}", self.frames, frames.len()),
            ));
        }
        let s = g.shape(frames[0]).to_vec();
        if s.len() != 3 || s[2] != self.channels {
            return Err(Error::contract("discriminate", format!("frames must be (H, W, {}), got {s:?}", self.channels)));
        }
        let mut framed = Vec::with_capacity(frames.len());
        for &f in frames {
            framed.push(g.reshape(f, &[1, s[0], s[1], s[2]])?);
        }
        let clip = g.concat(&framed, 0)?;
        let mut x = g.frames_to_channels(clip)?;
        for conv in &self.convs {
            x = conv.forward_lrelu(g, &self.store, x, 2)?;
        }
        let pooled = g.global_avg_pool(x)?;
        let logit = self.dense.forward(g, &self.store, pooled, 1)?;
        g.sigmoid(logit)
    }

    /// Probability for observed frames `x` followed by `y`.
    pub fn discriminate(&self, x: &VideoTensor, y: &VideoTensor) -> Result<f64> {
        let mut g = Graph::new();
        let frames: Vec<NodeId> = (0..x.len())
            .map(|t| x.frame(t))
            .chain((0..y.len()).map(|t| y.frame(t)))
            .map(|f| g.constant(f))
            .collect();
        let p = self.forward(&mut g, &frames)?;
        Ok(g.value(p).item())
    }
}
