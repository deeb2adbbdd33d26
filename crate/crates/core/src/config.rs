//! Line-based `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Model keys use the
//! [`ModelConfig`] field names (`weights.lambda2` for nested loss weights),
//! training keys the [`TrainConfig`] field names (`gen_adam.lr` and so on).
//! Command flags recorded in snapshots (`command`, `data`, `out`, ...) are
//! accepted too so a snapshot can be read back. Any other key is an error.
//!
//! ```
//! use stmfa::config::RunConfig;
//!
//! let cfg = RunConfig::parse("# toy run\nbase_channels = 8\ngen_adam.lr = 0.001\n").unwrap();
//! assert_eq!(cfg.model.base_channels, 8);
//! assert_eq!(cfg.train.gen_adam.lr, 0.001);
//! let err = RunConfig::parse("base_width = 8").unwrap_err();
//! assert!(err.to_string().contains("base_width"));
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TrainConfig};

pub const SNAPSHOT_FILE: &str = "effective_config.txt";

/// Flag keys that may appear in a snapshot.
pub const FLAG_KEYS: &[&str] = &[
    "command", "data", "out", "config", "checkpoint", "in", "n", "pred", "truth", "clips", "preset", "mode",
    "levels", "threads",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Command flags, keyed by flag name without dashes.
    pub flags: BTreeMap<String, String>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for key {key:?}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_prefix(&e))))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "iterations" => t.iterations = parse_value(key, value)?,
            "batch_size" => t.batch_size = parse_value(key, value)?,
            "checkpoint_every" => t.checkpoint_every = parse_value(key, value)?,
            "gen_adam.lr" => t.gen_adam.lr = parse_value(key, value)?,
            "gen_adam.beta1" => t.gen_adam.beta1 = parse_value(key, value)?,
            "gen_adam.beta2" => t.gen_adam.beta2 = parse_value(key, value)?,
            "gen_adam.eps" => t.gen_adam.eps = parse_value(key, value)?,
            "disc_adam.lr" => t.disc_adam.lr = parse_value(key, value)?,
            "disc_adam.beta1" => t.disc_adam.beta1 = parse_value(key, value)?,
            "disc_adam.beta2" => t.disc_adam.beta2 = parse_value(key, value)?,
            "disc_adam.eps" => t.disc_adam.eps = parse_value(key, value)?,
            k if FLAG_KEYS.contains(&k) => {
                self.flags.insert(k.to_string(), value.to_string());
            }
            _ => self.model.set(key, value)?,
        }
        Ok(())
    }

    pub fn train_entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        vec![
            ("iterations", t.iterations.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("checkpoint_every", t.checkpoint_every.to_string()),
            ("gen_adam.lr", t.gen_adam.lr.to_string()),
            ("gen_adam.beta1", t.gen_adam.beta1.to_string()),
            ("gen_adam.beta2", t.gen_adam.beta2.to_string()),
            ("gen_adam.eps", t.gen_adam.eps.to_string()),
            ("disc_adam.lr", t.disc_adam.lr.to_string()),
            ("disc_adam.beta1", t.disc_adam.beta1.to_string()),
            ("disc_adam.beta2", t.disc_adam.beta2.to_string()),
            ("disc_adam.eps", t.disc_adam.eps.to_string()),
        ]
    }

    /// Text that [`RunConfig::parse`] reads back to an equal value.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# stmfa effective configuration\n");
        for (k, v) in &self.flags {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (k, v) in self.model.entries().into_iter().chain(self.train_entries()) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}
