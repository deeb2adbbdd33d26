//! End-to-end finite-difference check of the generator loss on a model small
//! enough to perturb every weight.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::gradcheck::{max_rel_error, CheckResult};
use crate::autodiff::{Graph, NodeId};
use crate::error::Result;
use crate::losses::graph as lg;
use crate::tensor::Tensor;

use super::config::ModelConfig;
use super::discriminator::Discriminator;
use super::generator::Generator;
use super::train::stack_frames;

pub const MICRO_TOLERANCE: f64 = 1e-3;
pub const MICRO_EXTENT: usize = 8;
/// Step for the central differences; small so that perturbations rarely
/// cross a leaky-ReLU or absolute-value kink.
pub const MICRO_EPSILON: f64 = 1e-7;

/// 8x8 frames, two units, one channel per layer and a two-channel LSTM.
pub fn micro_config(seed: u64) -> ModelConfig {
    ModelConfig {
        input_frames: 4,
        predict_frames: 2,
        channels: 1,
        base_channels: 1,
        rrdb_units: 2,
        swam_levels: 2,
        lstm_hidden: 2,
        seed,
        ..ModelConfig::default()
    }
}

fn generator_loss(gen: &Generator, disc: &Discriminator, frames: &[Tensor], truth: &Tensor, g: &mut Graph) -> Result<NodeId> {
    let xs: Vec<NodeId> = frames.iter().map(|f| g.constant(f.clone())).collect();
    let preds = gen.rollout(g, &xs, gen.config.predict_frames)?;
    let seq: Vec<NodeId> = xs.iter().chain(&preds).copied().collect();
    let d_fake = disc.forward(g, &seq)?;
    let y = g.constant(truth.clone());
    let y_hat = stack_frames(g, &preds)?;
    Ok(lg::generator_total_loss(g, y, y_hat, d_fake, &gen.config.weights)?.total)
}

/// Compares backpropagated `∂L_G/∂θ` for every generator weight with central
/// differences.
pub fn micro_gradcheck(seed: u64) -> Result<CheckResult> {
    let cfg = micro_config(seed);
    let mut gen = Generator::new(&cfg)?;
    let disc = Discriminator::new(&cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    let mut frame = || {
        let n = MICRO_EXTENT * MICRO_EXTENT;
        Tensor::new(&[MICRO_EXTENT, MICRO_EXTENT, 1], (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
    };
    let frames = (0..cfg.input_frames).map(|_| frame()).collect::<Result<Vec<_>>>()?;
    let truth_frames = (0..cfg.predict_frames).map(|_| frame()).collect::<Result<Vec<_>>>()?;
    let truth = crate::video::VideoTensor::from_frames(&truth_frames)?.into_tensor();

    let mut g = Graph::new();
    let loss = generator_loss(&gen, &disc, &frames, &truth, &mut g)?;
    gen.store.zero_grad();
    g.backward_into(loss, &mut gen.store)?;
    let analytic: Vec<f64> = gen.store.iter().flat_map(|p| p.grad.data().to_vec()).collect();

    let ids: Vec<_> = gen.store.ids().collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    for id in ids {
        for j in 0..gen.store.get(id).value.len() {
            let orig = gen.store.get(id).value.data()[j];
            let eval = |v: f64, gen: &mut Generator| -> Result<f64> {
                gen.store.get_mut(id).value.data_mut()[j] = v;
                let mut g = Graph::new();
                let l = generator_loss(gen, &disc, &frames, &truth, &mut g)?;
                Ok(g.value(l).item())
            };
            let plus = eval(orig + MICRO_EPSILON, &mut gen)?;
            let minus = eval(orig - MICRO_EPSILON, &mut gen)?;
            gen.store.get_mut(id).value.data_mut()[j] = orig;
            numeric.push((plus - minus) / (2.0 * MICRO_EPSILON));
        }
    }
    Ok(CheckResult {
        name: "micro_model".into(),
        max_rel_error: max_rel_error(&analytic, &numeric),
        tolerance: MICRO_TOLERANCE,
    })
}
