use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::wavelet::Family;

/// Which wavelet paths the generator keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ablation {
    #[default]
    Full,
    NoSwam,
    NoTwam,
    NoWam,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoSwam, Ablation::NoTwam, Ablation::NoWam];

    pub fn uses_swam(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoTwam)
    }

    pub fn uses_twam(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoSwam)
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_swam" => Ok(Ablation::NoSwam),
            "no_twam" => Ok(Ablation::NoTwam),
            "no_wam" => Ok(Ablation::NoWam),
            other => Err(Error::Config(format!(
                "unknown ablation {other:?}; expected full, no_swam, no_twam or no_wam"
            ))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::NoSwam => "no_swam",
            Ablation::NoTwam => "no_twam",
            Ablation::NoWam => "no_wam",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// `m`: observed frames.
    pub input_frames: usize,
    /// `n`: predicted frames.
    pub predict_frames: usize,
    /// Frame channels `C`.
    pub channels: usize,
    pub base_channels: usize,
    pub rrdb_units: usize,
    pub swam_levels: usize,
    pub lstm_hidden: usize,
    pub ablation: Ablation,
    pub wavelet: Family,
    pub weights: LossWeights,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_frames: 8,
            predict_frames: 4,
            channels: 1,
            base_channels: 16,
            rrdb_units: 3,
            swam_levels: 3,
            lstm_hidden: 32,
            ablation: Ablation::Full,
            wavelet: Family::Haar,
            weights: LossWeights { alpha: 2, ..LossWeights::default() },
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.swam_levels != self.rrdb_units {
            return bad(format!(
                "swam_levels ({}) must equal rrdb_units ({})",
                self.swam_levels, self.rrdb_units
            ));
        }
        if self.input_frames < 4 {
            return bad(format!("input_frames must be >= 4, got {}", self.input_frames));
        }
        for (name, v) in [
            ("predict_frames", self.predict_frames),
            ("channels", self.channels),
            ("base_channels", self.base_channels),
            ("rrdb_units", self.rrdb_units),
            ("lstm_hidden", self.lstm_hidden),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        self.weights.validate()
    }

    /// Frame extents must be divisible by this.
    pub fn spatial_factor(&self) -> usize {
        1 << self.rrdb_units
    }

    pub fn check_frame(&self, shape: &[usize]) -> Result<()> {
        let f = self.spatial_factor();
        match shape {
            [h, w, c] if h % f == 0 && w % f == 0 && *h > 0 && *w > 0 && *c == self.channels => Ok(()),
            _ => Err(Error::contract(
                "generator",
                format!(
                    "frames must be (H, W, {}) with H and W divisible by {f}, got {shape:?}",
                    self.channels
                ),
            )),
        }
    }

    /// Sets one field from its config-file key and textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {value:?} for key {key:?}")))
        }
        match key {
            "input_frames" => self.input_frames = parse(key, value)?,
            "predict_frames" => self.predict_frames = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "base_channels" => self.base_channels = parse(key, value)?,
            "rrdb_units" => self.rrdb_units = parse(key, value)?,
            "swam_levels" => self.swam_levels = parse(key, value)?,
            "lstm_hidden" => self.lstm_hidden = parse(key, value)?,
            "ablation" => self.ablation = value.parse()?,
            "wavelet" => {
                self.wavelet = value
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid value {value:?} for key \"wavelet\"")))?
            }
            "weights.lambda1" => self.weights.lambda1 = parse(key, value)?,
            "weights.lambda2" => self.weights.lambda2 = parse(key, value)?,
            "weights.alpha" => self.weights.alpha = parse(key, value)?,
            "weights.normalize" => self.weights.normalize = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// `(key, value)` pairs accepted by [`ModelConfig::set`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("input_frames", self.input_frames.to_string()),
            ("predict_frames", self.predict_frames.to_string()),
            ("channels", self.channels.to_string()),
            ("base_channels", self.base_channels.to_string()),
            ("rrdb_units", self.rrdb_units.to_string()),
            ("swam_levels", self.swam_levels.to_string()),
            ("lstm_hidden", self.lstm_hidden.to_string()),
            ("ablation", self.ablation.to_string()),
            ("wavelet", self.wavelet.to_string()),
            ("weights.lambda1", self.weights.lambda1.to_string()),
            ("weights.lambda2", self.weights.lambda2.to_string()),
            ("weights.alpha", self.weights.alpha.to_string()),
            ("weights.normalize", self.weights.normalize.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}
