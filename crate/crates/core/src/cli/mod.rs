//! The `stmfa` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or format
//! error, 3 numerical failure.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::model::Ablation;
use crate::wavelet::Family;

pub const THREADS_ENV: &str = "STMFA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stmfa", version, about = "Wavelet-based video prediction toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    TwoSpeed,
    Static,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Spatial,
    Temporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WaveletArg {
    Haar,
    Db4,
}

impl From<WaveletArg> for Family {
    fn from(w: WaveletArg) -> Family {
        match w {
            WaveletArg::Haar => Family::Haar,
            WaveletArg::Db4 => Family::Db4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum AblationArg {
    Full,
    NoSwam,
    NoTwam,
    NoWam,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Ablation {
        match a {
            AblationArg::Full => Ablation::Full,
            AblationArg::NoSwam => Ablation::NoSwam,
            AblationArg::NoTwam => Ablation::NoTwam,
            AblationArg::NoWam => Ablation::NoWam,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset of STMF clips plus a manifest.
    GenerateData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        clips: usize,
        #[arg(long, value_enum, default_value = "two-speed")]
        preset: PresetArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write wavelet sub-bands of a clip as PGM images and STMF tensors.
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        levels: usize,
        #[arg(long, value_enum, default_value = "haar")]
        wavelet: WaveletArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the generator and discriminator on a generated dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        ablation: Option<AblationArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict frames following the first `m` frames of a clip.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground truth, frame by frame.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every autodiff op and the micro model.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale one op's analytic gradient to exercise the failure path.
        #[arg(long, hide = true)]
        corrupt_op: Option<String>,
    },
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Format { .. } | Error::Io { .. } | Error::Checkpoint(_) | Error::Contract { .. } => 2,
        Error::Domain { .. } | Error::NonFinite { .. } | Error::Training { .. } => 3,
    }
}

/// Value of `STMFA_THREADS`, default 1.
pub fn threads_from_env() -> Result<usize, Error> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = threads_from_env().and_then(|threads| commands::dispatch(cli.command, threads));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
