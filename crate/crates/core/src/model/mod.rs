//! Video prediction network and its adversarial training loop.
//!
//! The generator encodes each frame with a stack of downsampling residual
//! units. Under the full configuration every unit also receives features
//! computed from a single-level spatial DWT of the frame (or of the previous
//! level's LL band), and a ConvLSTM carries state across frames. Before each
//! prediction the last `m` frames pass through a multilevel temporal DWT and
//! a small CNN; those features are concatenated with the LSTM hidden state,
//! mixed by a 1x1 convolution and decoded back to a frame.
//!
//! Ablations drop the spatial branch, the temporal branch, or both. A dropped
//! temporal branch is replaced by zeros so the fusion layer keeps its shape.
//!
//! ```
//! use stmfa::model::{Ablation, Generator, ModelConfig};
//! use stmfa::{Tensor, VideoTensor};
//!
//! let cfg = ModelConfig { input_frames: 4, predict_frames: 2, base_channels: 4,
//!                         lstm_hidden: 4, rrdb_units: 2, swam_levels: 2,
//!                         ablation: Ablation::Full, ..ModelConfig::default() };
//! let gen = Generator::new(&cfg).unwrap();
//! let x = VideoTensor::new(Tensor::full(&[4, 8, 8, 1], 0.3)).unwrap();
//! let y = gen.predict_sequence(&x, 2).unwrap();
//! assert_eq!(y.tensor().shape(), &[2, 8, 8, 1]);
//! ```

mod config;
mod discriminator;
mod generator;
mod layers;
pub mod micro;
mod train;

pub use config::{Ablation, ModelConfig};
pub use discriminator::{Discriminator, DISC_STAGES};
pub use generator::{Generator, GeneratorState, RESIDUAL_SCALE};
pub use layers::{Conv, LEAKY_SLOPE};
pub use micro::{micro_config, micro_gradcheck, MICRO_TOLERANCE};
pub use train::{
    copy_last_baseline, load_discriminator, load_generator, train, LogRow, TrainConfig, TrainOutcome,
    Trainer, Window, CHECKPOINT_FILE, DIAGNOSTICS_DIR, LOG_FILE, LOG_HEADER,
};
