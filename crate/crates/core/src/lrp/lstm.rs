//! Relevance through LSTM cells.
//!
//! Only the signal path carries relevance: the hidden state hands all of
//! its relevance to the cell state, the cell state splits it between the
//! previous cell state and the new signal-gate product in proportion to
//! their contributions, and the product hands everything to the signal.
//! Gates receive none.

use super::{stabilize, safe_div, LrpConfig};
use crate::error::{Error, Result};
use crate::layer::{Layer, LstmCell, LstmStep};
use crate::network::Network;
use crate::tensor::Tensor;

/// Input relevance (`steps x input`) for the final hidden state relevance
/// `r_hidden`.
pub(super) fn relevance(cell: &LstmCell, steps: &[LstmStep], r_hidden: &[f64], eps: f64) -> Vec<f64> {
    let h = cell.hidden_size();
    let d = cell.input_size();
    let cols = d + h;
    let w = cell.signal.weight.data();
    let mut r_x = vec![0.0; steps.len() * d];
    let mut r_h = r_hidden.to_vec();
    let mut r_c = vec![0.0; h];
    for (t, s) in steps.iter().enumerate().rev() {
        let mut r_signal = vec![0.0; h];
        for u in 0..h {
            let total = r_c[u] + r_h[u];
            let den = stabilize(s.cell[u], eps);
            r_c[u] = safe_div(s.forget[u] * s.cell_prev[u] * total, den);
            r_signal[u] = safe_div(s.product[u] * total, den);
        }
        // epsilon rule on the signal pre-activation
        let mut r_joint = vec![0.0; cols];
        for u in 0..h {
            let scale = safe_div(r_signal[u], stabilize(s.z_signal[u], eps));
            if scale == 0.0 {
                continue;
            }
            for c in 0..cols {
                r_joint[c] += s.joint_input[c] * w[u * cols + c] * scale;
            }
        }
        r_x[t * d..(t + 1) * d].copy_from_slice(&r_joint[..d]);
        r_h = r_joint[d..].to_vec();
    }
    r_x
}

/// Per-token relevance of a sequence model. The input is either token ids
/// (first layer an embedding) or a `steps x features` matrix whose rows are
/// summed.
pub fn lstm_lrp(net: &Network, sequence: &Tensor, out: usize, cfg: &LrpConfig) -> Result<Vec<f64>> {
    if !net.layers().iter().any(|l| matches!(l, Layer::Lstm(_))) {
        return Err(Error::invalid("network has no lstm layer"));
    }
    if sequence.is_empty() {
        return Err(Error::invalid("sequence is empty"));
    }
    let map = super::lrp_propagate(net, sequence, out, cfg)?;
    let input = map.input();
    Ok(match input.rank() {
        1 => input.data().to_vec(),
        _ => {
            let cols = input.cols();
            input.data().chunks(cols).map(|c| c.iter().sum()).collect()
        }
    })
}
