//! Convolutional LSTM cell built from graph ops.

use crate::error::{Error, Result};

use super::{Graph, NodeId};

/// Gate weights of a ConvLSTM cell.
///
/// `kernel` is `(k, k, Cx + Ch, 4·Ch)` and `bias` is `(4·Ch)`; output channels
/// are grouped as input, forget, output and candidate gates, in that order.
#[derive(Debug, Clone, Copy)]
pub struct ConvLstmCell {
    pub kernel: NodeId,
    pub bias: NodeId,
}

impl ConvLstmCell {
    /// One step: `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
    pub fn step(&self, g: &mut Graph, x: NodeId, h: NodeId, c: NodeId) -> Result<(NodeId, NodeId)> {
        let (xs, hs, cs) = (g.shape(x).to_vec(), g.shape(h).to_vec(), g.shape(c).to_vec());
        if xs.len() != 3 || hs.len() != 3 || xs[..2] != hs[..2] || hs != cs {
            return Err(Error::contract(
                "conv_lstm_step",
                format!("misaligned input {xs:?}, hidden {hs:?}, cell {cs:?}"),
            ));
        }
        let hidden = hs[2];
        let ks = g.shape(self.kernel).to_vec();
        if ks.len() != 4 || ks[3] != 4 * hidden {
            return Err(Error::contract(
                "conv_lstm_step",
                format!("kernel {ks:?} must produce {} gate channels", 4 * hidden),
            ));
        }
        let xh = g.concat(&[x, h], 2)?;
        let gates = g.conv2d(xh, self.kernel, Some(self.bias), 1, ks[0] / 2)?;
        let i = g.slice(gates, 2, 0, hidden)?;
        let f = g.slice(gates, 2, hidden, hidden)?;
        let o = g.slice(gates, 2, 2 * hidden, hidden)?;
        let cand = g.slice(gates, 2, 3 * hidden, hidden)?;
        let i = g.sigmoid(i)?;
        let f = g.sigmoid(f)?;
        let o = g.sigmoid(o)?;
        let cand = g.tanh(cand)?;
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_next = g.add(keep, write)?;
        let squashed = g.tanh(c_next)?;
        let h_next = g.mul(o, squashed)?;
        Ok((h_next, c_next))
    }
}
