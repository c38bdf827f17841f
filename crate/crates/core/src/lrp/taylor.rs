use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::Tensor;

/// A root point must satisfy `|f(root)| <= ROOT_TOLERANCE`.
pub const ROOT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorResult {
    /// `df/dx_p (root) * (x_p - root_p)`
    pub relevances: Tensor,
    /// `f(x) - sum_p R_p`, everything the first-order term misses.
    pub residual: f64,
    pub output_value: f64,
    pub root_value: f64,
}

fn output(net: &Network, x: &Tensor, out: usize) -> Result<f64> {
    let y = net.forward(x)?;
    y.output()
        .data()
        .get(out)
        .copied()
        .ok_or_else(|| Error::invalid(format!("output index {out} out of range")))
}

/// First-order Taylor decomposition of output `out` around a caller-supplied
/// root point.
pub fn taylor_relevance(net: &Network, x: &Tensor, root: &Tensor, out: usize) -> Result<TaylorResult> {
    if x.dims() != root.dims() {
        return Err(Error::invalid("root point and input differ in shape"));
    }
    let root_value = output(net, root, out)?;
    if root_value.abs() > ROOT_TOLERANCE {
        return Err(Error::invalid(format!(
            "f(root) = {root_value:e} is not within {ROOT_TOLERANCE:e} of zero; supply a better root point"
        )));
    }
    let grad = net.gradient(root, out)?.swap_remove(0);
    let rel: Vec<f64> = grad
        .data()
        .iter()
        .zip(x.data().iter().zip(root.data()))
        .map(|(g, (a, b))| g * (a - b))
        .collect();
    let output_value = output(net, x, out)?;
    let residual = output_value - rel.iter().sum::<f64>();
    Ok(TaylorResult {
        relevances: Tensor::new(x.dims().to_vec(), rel)?,
        residual,
        output_value,
        root_value,
    })
}
