use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{read_checkpoint, write_checkpoint, Adam, AdamConfig, Graph, NodeId};
use crate::data::{write_stmf, Dtype};
use crate::error::{Error, Result};
use crate::losses::graph as lg;
use crate::video::VideoTensor;

use super::config::ModelConfig;
use super::discriminator::Discriminator;
use super::generator::Generator;

pub const LOG_HEADER: &str = "iter,loss_d,loss_l2,loss_gdl,loss_adv_g,loss_g";
pub const LOG_FILE: &str = "train_log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.stmc";
pub const DIAGNOSTICS_DIR: &str = "diagnostics";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub gen_adam: AdamConfig,
    pub disc_adam: AdamConfig,
    /// Checkpoint cadence in iterations; 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            batch_size: 4,
            gen_adam: AdamConfig::default(),
            disc_adam: AdamConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        for (name, a) in [("gen", &self.gen_adam), ("disc", &self.disc_adam)] {
            if !(a.lr > 0.0 && a.eps > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
                return Err(Error::Config(format!("invalid Adam settings for {name}: {a:?}")));
            }
        }
        Ok(())
    }
}

/// Batch means of the losses after one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub loss_d: f64,
    pub loss_l2: f64,
    pub loss_gdl: f64,
    pub loss_adv_g: f64,
    pub loss_g: f64,
}

impl LogRow {
    /// `L2 + GDL`.
    pub fn loss_img(&self) -> f64 {
        self.loss_l2 + self.loss_gdl
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iter, self.loss_d, self.loss_l2, self.loss_gdl, self.loss_adv_g, self.loss_g
        )
    }

    fn values(&self) -> [f64; 5] {
        [self.loss_d, self.loss_l2, self.loss_gdl, self.loss_adv_g, self.loss_g]
    }
}

/// Observed frames and the frames that follow them.
#[derive(Debug, Clone)]
pub struct Window {
    pub x: VideoTensor,
    pub y: VideoTensor,
}

/// Generator, discriminator and their optimizers.
pub struct Trainer {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub config: TrainConfig,
    adam_g: Adam,
    adam_d: Adam,
    rng: ChaCha8Rng,
    iteration: usize,
    last_flops: u64,
}

impl Trainer {
    pub fn new(model: &ModelConfig, config: &TrainConfig) -> Result<Trainer> {
        config.validate()?;
        let generator = Generator::new(model)?;
        let discriminator = Discriminator::new(model)?;
        let adam_g = Adam::new(&generator.store, config.gen_adam);
        let adam_d = Adam::new(&discriminator.store, config.disc_adam);
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        rng.set_stream(3);
        Ok(Trainer {
            generator,
            discriminator,
            config: config.clone(),
            adam_g,
            adam_d,
            rng,
            iteration: 0,
            last_flops: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Forward FLOPs of the most recent step, both networks included.
    pub fn last_step_flops(&self) -> u64 {
        self.last_flops
    }

    /// Draws `batch_size` windows of `m + n` consecutive frames.
    pub fn sample_batch(&mut self, clips: &[VideoTensor]) -> Result<Vec<Window>> {
        let m = self.generator.config.input_frames;
        let n = self.generator.config.predict_frames;
        if clips.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        (0..self.config.batch_size)
            .map(|_| {
                let clip = &clips[self.rng.gen_range(0..clips.len())];
                if clip.len() < m + n {
                    return Err(Error::Config(format!(
                        "clip has {} frames but a window needs {}",
                        clip.len(),
                        m + n
                    )));
                }
                let start = self.rng.gen_range(0..=clip.len() - m - n);
                Ok(Window { x: clip.frames(start, m)?, y: clip.frames(start + m, n)? })
            })
            .collect()
    }

    /// One discriminator update followed by one generator update.
    pub fn step(&mut self, batch: &[Window]) -> Result<LogRow> {
        let iter = self.iteration + 1;
        let row = self.step_inner(batch).map_err(|e| match e {
            Error::NonFinite { op } => Error::Training { iteration: iter, msg: format!("non-finite value produced by {op}") },
            Error::Training { msg, .. } => Error::Training { iteration: iter, msg },
            other => other,
        })?;
        if let Some(v) = row.values().iter().find(|v| !v.is_finite()) {
            return Err(Error::Training { iteration: iter, msg: format!("non-finite loss {v}") });
        }
        self.iteration = iter;
        Ok(row)
    }

    fn step_inner(&mut self, batch: &[Window]) -> Result<LogRow> {
        if batch.is_empty() {
            return Err(Error::contract("train step", "empty batch"));
        }
        let n = self.generator.config.predict_frames;
        let inv_b = 1.0 / batch.len() as f64;

        let mut g = Graph::new();
        let mut items = Vec::with_capacity(batch.len());
        for w in batch {
            let xs: Vec<NodeId> = (0..w.x.len()).map(|t| g.constant(w.x.frame(t))).collect();
            let preds = self.generator.rollout(&mut g, &xs, n)?;
            items.push((xs, preds));
        }

        let mut gd = Graph::new();
        let mut d_losses = Vec::with_capacity(batch.len());
        for (w, (_, preds)) in batch.iter().zip(&items) {
            let xs: Vec<NodeId> = (0..w.x.len()).map(|t| gd.constant(w.x.frame(t))).collect();
            let real: Vec<NodeId> = xs.iter().copied().chain((0..n).map(|t| gd.constant(w.y.frame(t)))).collect();
            let fake: Vec<NodeId> = xs.iter().copied().chain(preds.iter().map(|&p| gd.constant(g.value(p).clone()))).collect();
            let d_real = self.discriminator.forward(&mut gd, &real)?;
            let d_fake = self.discriminator.forward(&mut gd, &fake)?;
            d_losses.push(lg::adversarial_d_loss(&mut gd, d_real, d_fake)?);
        }
        let loss_d = mean_node(&mut gd, &d_losses, inv_b)?;
        self.discriminator.store.zero_grad();
        gd.backward_into(loss_d, &mut self.discriminator.store)?;
        self.adam_d.step(&mut self.discriminator.store)?;

        let weights = self.generator.config.weights;
        let (mut l2, mut gdl, mut adv, mut total) = (vec![], vec![], vec![], vec![]);
        for (w, (xs, preds)) in batch.iter().zip(&items) {
            let seq: Vec<NodeId> = xs.iter().chain(preds).copied().collect();
            let d_fake = self.discriminator.forward(&mut g, &seq)?;
            let y = g.constant(w.y.tensor().clone());
            let y_hat = stack_frames(&mut g, preds)?;
            let terms = lg::generator_total_loss(&mut g, y, y_hat, d_fake, &weights)?;
            l2.push(terms.l2);
            gdl.push(terms.gdl);
            adv.push(terms.adversarial);
            total.push(terms.total);
        }
        let loss_g = mean_node(&mut g, &total, inv_b)?;
        self.generator.store.zero_grad();
        g.backward_into(loss_g, &mut self.generator.store)?;
        self.adam_g.step(&mut self.generator.store)?;
        self.last_flops = g.flops() + gd.flops();

        let mean = |g: &Graph, ids: &[NodeId]| ids.iter().map(|&i| g.value(i).item()).sum::<f64>() * inv_b;
        Ok(LogRow {
            iter: self.iteration + 1,
            loss_d: gd.value(loss_d).item(),
            loss_l2: mean(&g, &l2),
            loss_gdl: mean(&g, &gdl),
            loss_adv_g: mean(&g, &adv),
            loss_g: g.value(loss_g).item(),
        })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &[&self.generator.store, &self.discriminator.store])
    }
}

/// `(n, H, W, C)` node from `n` frame nodes.
pub(crate) fn stack_frames(g: &mut Graph, frames: &[NodeId]) -> Result<NodeId> {
    let mut parts = Vec::with_capacity(frames.len());
    for &f in frames {
        let s = g.shape(f).to_vec();
        let mut shape = vec![1];
        shape.extend_from_slice(&s);
        parts.push(g.reshape(f, &shape)?);
    }
    g.concat(&parts, 0)
}

fn mean_node(g: &mut Graph, parts: &[NodeId], inv: f64) -> Result<NodeId> {
    let mut acc = parts[0];
    for &p in &parts[1..] {
        acc = g.add(acc, p)?;
    }
    g.scale(acc, inv)
}

/// Result of [`train`].
pub struct TrainOutcome {
    pub trainer: Trainer,
    pub log: Vec<LogRow>,
}

/// Runs `config.iterations` steps on windows drawn from `clips`.
///
/// With `out` set, the CSV log and checkpoint are written there, and a
/// failing step leaves its batch under `diagnostics/`. `on_row` sees every
/// log row as it is produced.
pub fn train(
    clips: &[VideoTensor],
    model: &ModelConfig,
    config: &TrainConfig,
    out: Option<&Path>,
    mut on_row: impl FnMut(&LogRow),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(model, config)?;
    let mut log = Vec::with_capacity(config.iterations);
    let mut writer = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(LOG_FILE);
            let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(f);
            writeln!(w, "{LOG_HEADER}").map_err(|e| Error::io(&path, e))?;
            Some((w, path))
        }
        None => None,
    };
    for _ in 0..config.iterations {
        let batch = trainer.sample_batch(clips)?;
        let row = match trainer.step(&batch) {
            Ok(row) => row,
            Err(e) => {
                if let (Some(dir), Error::Training { .. }) = (out, &e) {
                    dump_diagnostics(&dir.join(DIAGNOSTICS_DIR), &batch, &e)?;
                }
                return Err(e);
            }
        };
        if let Some((w, path)) = &mut writer {
            writeln!(w, "{}", row.csv()).map_err(|e| Error::io(&*path, e))?;
        }
        on_row(&row);
        log.push(row);
        if let Some(dir) = out {
            if config.checkpoint_every > 0 && row.iter % config.checkpoint_every == 0 {
                trainer.save_checkpoint(&dir.join(CHECKPOINT_FILE))?;
            }
        }
    }
    if let (Some(dir), Some((mut w, path))) = (out, writer) {
        w.flush().map_err(|e| Error::io(&path, e))?;
        trainer.save_checkpoint(&dir.join(CHECKPOINT_FILE))?;
    }
    Ok(TrainOutcome { trainer, log })
}

fn dump_diagnostics(dir: &Path, batch: &[Window], err: &Error) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, w) in batch.iter().enumerate() {
        write_stmf(&dir.join(format!("batch{i}_x.stmf")), &w.x, Dtype::F64)?;
        write_stmf(&dir.join(format!("batch{i}_y.stmf")), &w.y, Dtype::F64)?;
    }
    let path: PathBuf = dir.join("error.txt");
    fs::write(&path, format!("{err}\n")).map_err(|e| Error::io(&path, e))
}

/// Generator for `model` with weights from an STMC checkpoint.
pub fn load_generator(model: &ModelConfig, checkpoint: &Path) -> Result<Generator> {
    let records = read_checkpoint(checkpoint)?;
    let mut gen = Generator::new(model)?;
    gen.store.load(&records)?;
    Ok(gen)
}

/// Discriminator for `model` with weights from an STMC checkpoint.
pub fn load_discriminator(model: &ModelConfig, checkpoint: &Path) -> Result<Discriminator> {
    let records = read_checkpoint(checkpoint)?;
    let mut disc = Discriminator::new(model)?;
    disc.store.load(&records)?;
    Ok(disc)
}

/// Copy-last-frame baseline: repeats the final observed frame `n` times.
pub fn copy_last_baseline(x: &VideoTensor, n: usize) -> Result<VideoTensor> {
    let last = x.frame(x.len() - 1);
    VideoTensor::from_frames(&vec![last; n])
}
