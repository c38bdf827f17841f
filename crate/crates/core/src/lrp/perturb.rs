//! Perturbation curves: the target score as elements are removed.

use crate::error::{Error, Result};
use crate::layer::Layer;
use crate::network::Network;
use crate::tensor::Tensor;

/// How an element is removed.
#[derive(Clone, Debug, PartialEq)]
pub enum Removal {
    /// Replace a token by the zero embedding (first layer an embedding) or
    /// a row of a `steps x features` input by zeros.
    ZeroRow,
    /// Replace feature `i` of a flat row by `neutral[i]` (background mean).
    Feature { neutral: Vec<f64> },
}

/// Element indices by descending relevance; ties keep the lower index first.
pub fn relevance_order(relevances: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..relevances.len()).collect();
    order.sort_by(|&a, &b| relevances[b].total_cmp(&relevances[a]).then(a.cmp(&b)));
    order
}

/// Scores after removing the `0..=n` most relevant elements.
pub fn perturbation_curve(net: &Network, x: &Tensor, relevances: &[f64], removal: &Removal, out: usize, n: usize) -> Result<Vec<f64>> {
    perturbation_curve_ordered(net, x, &relevance_order(relevances), removal, out, n)
}

/// Scores after removing `order[..k]` for `k = 0..=n`.
pub fn perturbation_curve_ordered(net: &Network, x: &Tensor, order: &[usize], removal: &Removal, out: usize, n: usize) -> Result<Vec<f64>> {
    let embedded = matches!(net.layers().first(), Some(Layer::Embedding(_)));
    // the model and input actually perturbed
    let (model, base) = if embedded {
        (net.tail(1)?, net.forward(x)?.layer_output(0).clone())
    } else {
        (net.clone(), x.clone())
    };
    let elements = match removal {
        Removal::ZeroRow if embedded || base.rank() == 2 => base.rows(),
        Removal::ZeroRow => {
            return Err(Error::invalid("row removal needs token ids or a steps x features input"));
        }
        Removal::Feature { neutral } => {
            if neutral.len() != base.len() {
                return Err(Error::invalid("neutral row width differs from the input"));
            }
            base.len()
        }
    };
    if n > elements || order.len() < n || order[..n].iter().any(|&i| i >= elements) {
        return Err(Error::invalid(format!(
            "cannot remove {n} of {elements} elements with the given order"
        )));
    }
    let score = |t: &Tensor| -> Result<f64> {
        model
            .forward(t)?
            .output()
            .data()
            .get(out)
            .copied()
            .ok_or_else(|| Error::invalid(format!("output index {out} out of range")))
    };
    let mut current = base;
    let mut scores = vec![score(&current)?];
    for &e in &order[..n] {
        match removal {
            Removal::ZeroRow => {
                let cols = current.cols();
                current.data_mut()[e * cols..(e + 1) * cols].iter_mut().for_each(|v| *v = 0.0);
            }
            Removal::Feature { neutral } => current.data_mut()[e] = neutral[e],
        }
        scores.push(score(&current)?);
    }
    Ok(scores)
}
