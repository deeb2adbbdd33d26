use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore};
use crate::error::Result;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;

/// How a layer's weights are drawn.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    /// Uniform with variance `2 / fan_in`, for layers followed by a leaky ReLU.
    He,
    /// Uniform with variance `1 / fan_in`.
    Lecun,
    /// He variance for a stride-2 transposed convolution, where each output
    /// sample sees a quarter of the kernel taps.
    HeTransposed,
}

/// Kernel `(k, k, cin, cout)` plus bias `(cout)`.
#[derive(Debug, Clone, Copy)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
}

impl Conv {
    /// Registers `{name}.w` and `{name}.b`; the bias starts at zero.
    pub(crate) fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        k: usize,
        cin: usize,
        cout: usize,
        init: Init,
    ) -> Result<Conv> {
        let fan_in = (k * k * cin) as f64;
        let var = match init {
            Init::He => 2.0 / fan_in,
            Init::Lecun => 1.0 / fan_in,
            // kernel is (k, k, out, in) for the transposed direction
            Init::HeTransposed => 2.0 / ((k * k * cout) as f64 / 4.0),
        };
        let bound = (3.0 * var).sqrt();
        let weight = store.add(format!("{name}.w"), uniform(rng, &[k, k, cin, cout], bound))?;
        let bias = store.add(format!("{name}.b"), Tensor::zeros(&[cout]))?;
        Ok(Conv { weight, bias })
    }

    /// Same-padded convolution for odd kernels.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId, stride: usize) -> Result<NodeId> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let k = g.shape(w)[0];
        g.conv2d(x, w, Some(b), stride, k / 2)
    }

    pub fn forward_lrelu(&self, g: &mut Graph, store: &ParamStore, x: NodeId, stride: usize) -> Result<NodeId> {
        let y = self.forward(g, store, x, stride)?;
        g.leaky_relu(y, LEAKY_SLOPE)
    }
}
