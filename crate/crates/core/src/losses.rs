//! Image-domain and adversarial losses.
//!
//! With `Y` the ground-truth frames and `Ŷ` the prediction:
//!
//! - `L2 = Σ (Y − Ŷ)²` over every sample.
//! - `GDL = Σ | |y[i,j] − y[i−1,j]| − |ŷ[i,j] − ŷ[i−1,j]| |^α
//!        + Σ | |y[i,j−1] − y[i,j]| − |ŷ[i,j−1] − ŷ[i,j]| |^α`, summed over
//!   frames, channels and the in-bounds neighbour pairs only.
//! - `L_img = L2 + GDL`.
//! - `L_D = −ln D(X, Y) − ln(1 − D(X, Ŷ))` and `L_G^A = −ln D(X, Ŷ)`, with
//!   probabilities clamped to `[ε, 1 − ε]`.
//! - `L_G = λ1·L_img + λ2·L_G^A`.
//!
//! Plain functions work on [`Tensor`]s; the [`graph`] module builds the same
//! quantities as differentiable nodes.
//!
//! ```
//! use stmfa::losses::{gdl_loss, l2_loss};
//! use stmfa::Tensor;
//!
//! let y = Tensor::new(&[1, 2, 2, 1], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
//! let y_hat = Tensor::zeros(&[1, 2, 2, 1]);
//! assert_eq!(gdl_loss(&y, &y_hat, 1).unwrap(), 2.0);
//! assert_eq!(l2_loss(&y, &y_hat).unwrap(), 2.0);
//! ```

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probability clamp applied before every logarithm.
pub const PROB_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    /// GDL exponent, at least 1.
    pub alpha: u32,
    /// Divide L2 by its sample count and GDL by its pair count.
    pub normalize: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 0.001,
            alpha: 1,
            normalize: false,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::Config(format!("lambda1 must be finite and >= 0, got {}", self.lambda1)));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::Config(format!("lambda2 must be finite and >= 0, got {}", self.lambda2)));
        }
        if self.alpha < 1 {
            return Err(Error::Config("alpha must be an integer >= 1".into()));
        }
        Ok(())
    }
}

/// `(height axis, width axis)` for `(H, W, C)` frames or `(T, H, W, C)` clips.
fn spatial_axes(op: &'static str, shape: &[usize]) -> Result<(usize, usize)> {
    let axes = match shape.len() {
        3 => (0, 1),
        4 => (1, 2),
        _ => {
            return Err(Error::contract(
                op,
                format!("expected (H, W, C) or (T, H, W, C), got {shape:?}"),
            ))
        }
    };
    if shape[axes.0] < 2 || shape[axes.1] < 2 {
        return Err(Error::contract(op, format!("H and W must be >= 2, got {shape:?}")));
    }
    Ok(axes)
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::contract(op, format!("shapes differ: {a:?} vs {b:?}")));
    }
    Ok(())
}

pub fn l2_loss(y: &Tensor, y_hat: &Tensor) -> Result<f64> {
    same_shape("l2_loss", y.shape(), y_hat.shape())?;
    Ok(y.data().iter().zip(y_hat.data()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Number of neighbour pairs the GDL sums over.
pub fn gdl_pair_count(shape: &[usize]) -> Result<usize> {
    let (ha, wa) = spatial_axes("gdl_loss", shape)?;
    let (h, w) = (shape[ha], shape[wa]);
    let rest: usize = shape.iter().product::<usize>() / (h * w);
    Ok(rest * ((h - 1) * w + h * (w - 1)))
}

pub fn gdl_loss(y: &Tensor, y_hat: &Tensor, alpha: u32) -> Result<f64> {
    same_shape("gdl_loss", y.shape(), y_hat.shape())?;
    if alpha < 1 {
        return Err(Error::contract("gdl_loss", "alpha must be >= 1"));
    }
    let shape = y.shape();
    let (ha, wa) = spatial_axes("gdl_loss", shape)?;
    let (h, w) = (shape[ha], shape[wa]);
    let c = shape[shape.len() - 1];
    let frames = if shape.len() == 4 { shape[0] } else { 1 };
    let at = |t: &Tensor, f: usize, i: usize, j: usize, k: usize| t.data()[((f * h + i) * w + j) * c + k];
    let term = |a: f64, b: f64| (a.abs() - b.abs()).abs().powi(alpha as i32);
    let mut total = 0.0;
    for f in 0..frames {
        for i in 0..h {
            for j in 0..w {
                for k in 0..c {
                    if i > 0 {
                        total += term(
                            at(y, f, i, j, k) - at(y, f, i - 1, j, k),
                            at(y_hat, f, i, j, k) - at(y_hat, f, i - 1, j, k),
                        );
                    }
                    if j > 0 {
                        total += term(
                            at(y, f, i, j - 1, k) - at(y, f, i, j, k),
                            at(y_hat, f, i, j - 1, k) - at(y_hat, f, i, j, k),
                        );
                    }
                }
            }
        }
    }
    Ok(total)
}

pub fn image_domain_loss(y: &Tensor, y_hat: &Tensor, alpha: u32) -> Result<f64> {
    Ok(l2_loss(y, y_hat)? + gdl_loss(y, y_hat, alpha)?)
}

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
}

pub fn adversarial_d_loss(d_real: f64, d_fake: f64) -> f64 {
    -clamp_probability(d_real).ln() - (1.0 - clamp_probability(d_fake)).ln()
}

pub fn adversarial_g_loss(d_fake: f64) -> f64 {
    -clamp_probability(d_fake).ln()
}

/// Individual terms of the generator objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorLossTerms {
    /// L2 after optional normalization.
    pub l2: f64,
    /// GDL after optional normalization.
    pub gdl: f64,
    pub adversarial: f64,
    pub total: f64,
}

pub fn generator_total_loss(y: &Tensor, y_hat: &Tensor, d_fake: f64, weights: &LossWeights) -> Result<GeneratorLossTerms> {
    weights.validate()?;
    let mut l2 = l2_loss(y, y_hat)?;
    let mut gdl = gdl_loss(y, y_hat, weights.alpha)?;
    if weights.normalize {
        l2 /= y.len() as f64;
        gdl /= gdl_pair_count(y.shape())? as f64;
    }
    let adversarial = adversarial_g_loss(d_fake);
    Ok(GeneratorLossTerms {
        l2,
        gdl,
        adversarial,
        total: weights.lambda1 * (l2 + gdl) + weights.lambda2 * adversarial,
    })
}

/// The losses as graph nodes. Every function returns a one-element node.
pub mod graph {
    use super::{gdl_pair_count, same_shape, spatial_axes, LossWeights, PROB_EPSILON};
    use crate::autodiff::{Graph, NodeId};
    use crate::error::{Error, Result};
    use crate::tensor::Tensor;

    pub fn l2_loss(g: &mut Graph, y: NodeId, y_hat: NodeId) -> Result<NodeId> {
        same_shape("l2_loss", g.shape(y), g.shape(y_hat))?;
        let d = g.sub(y, y_hat)?;
        let sq = g.square(d)?;
        g.sum(sq)
    }

    fn abs_differences(g: &mut Graph, x: NodeId, axis: usize) -> Result<NodeId> {
        let n = g.shape(x)[axis];
        let hi = g.slice(x, axis, 1, n - 1)?;
        let lo = g.slice(x, axis, 0, n - 1)?;
        let d = g.sub(hi, lo)?;
        g.abs(d)
    }

    pub fn gdl_loss(g: &mut Graph, y: NodeId, y_hat: NodeId, alpha: u32) -> Result<NodeId> {
        same_shape("gdl_loss", g.shape(y), g.shape(y_hat))?;
        if alpha < 1 {
            return Err(Error::contract("gdl_loss", "alpha must be >= 1"));
        }
        let (ha, wa) = spatial_axes("gdl_loss", g.shape(y))?;
        let mut parts = Vec::with_capacity(2);
        for axis in [ha, wa] {
            let gy = abs_differences(g, y, axis)?;
            let gp = abs_differences(g, y_hat, axis)?;
            let d = g.sub(gy, gp)?;
            let mut e = g.abs(d)?;
            if alpha > 1 {
                e = g.powi(e, alpha as i32)?;
            }
            parts.push(g.sum(e)?);
        }
        g.add(parts[0], parts[1])
    }

    pub fn image_domain_loss(g: &mut Graph, y: NodeId, y_hat: NodeId, alpha: u32) -> Result<NodeId> {
        let l2 = l2_loss(g, y, y_hat)?;
        let gdl = gdl_loss(g, y, y_hat, alpha)?;
        g.add(l2, gdl)
    }

    /// `−ln(clamp(p))`, or `−ln(1 − clamp(p))` when `complement` is set.
    fn neg_log(g: &mut Graph, p: NodeId, complement: bool) -> Result<NodeId> {
        if g.value(p).len() != 1 {
            return Err(Error::contract(
                "adversarial loss",
                format!("probability must be a single value, got shape {:?}", g.shape(p)),
            ));
        }
        let p = g.reshape(p, &[1])?;
        let mut q = g.clamp(p, PROB_EPSILON, 1.0 - PROB_EPSILON)?;
        if complement {
            let one = g.constant(Tensor::scalar(1.0));
            q = g.sub(one, q)?;
        }
        let l = g.log(q)?;
        g.neg(l)
    }

    pub fn adversarial_d_loss(g: &mut Graph, d_real: NodeId, d_fake: NodeId) -> Result<NodeId> {
        let a = neg_log(g, d_real, false)?;
        let b = neg_log(g, d_fake, true)?;
        g.add(a, b)
    }

    pub fn adversarial_g_loss(g: &mut Graph, d_fake: NodeId) -> Result<NodeId> {
        neg_log(g, d_fake, false)
    }

    /// Nodes for each generator term; `total` is the one to differentiate.
    #[derive(Debug, Clone, Copy)]
    pub struct GeneratorLoss {
        pub l2: NodeId,
        pub gdl: NodeId,
        pub adversarial: NodeId,
        pub total: NodeId,
    }

    pub fn generator_total_loss(
        g: &mut Graph,
        y: NodeId,
        y_hat: NodeId,
        d_fake: NodeId,
        weights: &LossWeights,
    ) -> Result<GeneratorLoss> {
        weights.validate()?;
        let mut l2 = l2_loss(g, y, y_hat)?;
        let mut gdl = gdl_loss(g, y, y_hat, weights.alpha)?;
        if weights.normalize {
            let n = g.value(y).len() as f64;
            let pairs = gdl_pair_count(g.shape(y))? as f64;
            l2 = g.scale(l2, 1.0 / n)?;
            gdl = g.scale(gdl, 1.0 / pairs)?;
        }
        let adversarial = adversarial_g_loss(g, d_fake)?;
        let img = g.add(l2, gdl)?;
        let img = g.scale(img, weights.lambda1)?;
        let adv = g.scale(adversarial, weights.lambda2)?;
        let total = g.add(img, adv)?;
        Ok(GeneratorLoss {
            l2,
            gdl,
            adversarial,
            total,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn clip(h: usize, w: usize, data: &[f64]) -> Tensor {
        Tensor::new(&[1, h, w, 1], data.to_vec()).unwrap()
    }

    #[test]
    fn l2_examples() {
        let y = Tensor::zeros(&[2, 2, 2, 1]);
        let p = Tensor::full(&[2, 2, 2, 1], 0.5);
        assert_eq!(l2_loss(&y, &p).unwrap(), 2.0);
        assert_eq!(l2_loss(&p, &p).unwrap(), 0.0);
        assert!(l2_loss(&y, &Tensor::zeros(&[2, 2, 1, 1])).is_err());
    }

    #[test]
    fn gdl_examples() {
        let y = clip(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let p = Tensor::zeros(&[1, 2, 2, 1]);
        assert_eq!(gdl_loss(&y, &p, 1).unwrap(), 2.0);
        assert_eq!(gdl_loss(&y, &y, 1).unwrap(), 0.0);
        assert_eq!(gdl_loss(&y, &p, 3).unwrap(), 2.0);
        assert!(gdl_loss(&y, &p, 0).is_err());
    }

    #[test]
    fn image_domain_composite() {
        // The GDL example doubles as the L2 example: two unit residuals.
        let y = clip(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let p = Tensor::zeros(&[1, 2, 2, 1]);
        assert_eq!(image_domain_loss(&y, &p, 1).unwrap(), 4.0);
    }

    #[test]
    fn adversarial_examples() {
        assert!((adversarial_d_loss(0.5, 0.5) - 2.0 * LN_2).abs() <= 1e-12);
        assert!(adversarial_d_loss(1.0, 0.0) < 1e-6);
        assert!((adversarial_d_loss(0.9, 0.1) - 0.210_721_031_315_652_6).abs() < 1e-12);
        assert!(adversarial_g_loss(1.0) < 1e-6);
        assert!((adversarial_g_loss(0.5) - LN_2).abs() < 1e-15);
        assert!((adversarial_g_loss(0.1) - std::f64::consts::LN_10).abs() < 1e-12);
        assert!(adversarial_d_loss(0.0, 1.0).is_finite());
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights { alpha: 0, ..Default::default() }.validate().is_err());
        assert!(LossWeights { lambda2: -1.0, ..Default::default() }.validate().is_err());
    }
}
