use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Wavelet families shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Family {
    #[default]
    Haar,
    /// Four-tap Daubechies wavelet (two vanishing moments).
    Db4,
}

impl Family {
    pub fn filter(self) -> WaveletFilter {
        match self {
            Family::Haar => WaveletFilter::haar(),
            Family::Db4 => WaveletFilter::db4(),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(Family::Haar),
            "db4" => Ok(Family::Db4),
            other => Err(Error::Config(format!(
                "unknown wavelet {other:?} (expected haar or db4)"
            ))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Haar => "haar",
            Family::Db4 => "db4",
        })
    }
}

/// Analysis (`dec_*`) and synthesis (`rec_*`) taps of a two-channel filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilter {
    pub name: &'static str,
    pub dec_lo: Vec<f64>,
    pub dec_hi: Vec<f64>,
    pub rec_lo: Vec<f64>,
    pub rec_hi: Vec<f64>,
}

impl WaveletFilter {
    pub fn haar() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::orthonormal("haar", vec![s, s])
    }

    pub fn db4() -> Self {
        let r3 = 3f64.sqrt();
        let d = 4.0 * 2f64.sqrt();
        // Scaling taps (1+√3, 3+√3, 3−√3, 1−√3)/(4√2), stored in convolution order.
        let lo = vec![(1.0 - r3) / d, (3.0 - r3) / d, (3.0 + r3) / d, (1.0 + r3) / d];
        Self::orthonormal("db4", lo)
    }

    /// Derives the quadrature-mirror high-pass and the time-reversed synthesis
    /// pair from an orthonormal low-pass.
    fn orthonormal(name: &'static str, dec_lo: Vec<f64>) -> Self {
        let n = dec_lo.len();
        let dec_hi: Vec<f64> = (0..n)
            .map(|k| {
                let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
                sign * dec_lo[n - 1 - k]
            })
            .collect();
        let rec_lo = dec_lo.iter().rev().copied().collect();
        let rec_hi = dec_hi.iter().rev().copied().collect();
        WaveletFilter {
            name,
            dec_lo,
            dec_hi,
            rec_lo,
            rec_hi,
        }
    }

    pub fn len(&self) -> usize {
        self.dec_lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dec_lo.is_empty()
    }
}
