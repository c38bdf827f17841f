//! Integrated Gradients along the straight path from a baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IgResult {
    pub baseline: Tensor,
    pub attributions: Tensor,
    pub steps: usize,
    pub output_value: f64,
    pub baseline_value: f64,
    /// `|sum(attributions) - (f(x) - f(baseline))|`
    pub completeness_gap: f64,
}

/// Right-Riemann sum over `steps` points `baseline + t/m (x - baseline)`,
/// `t = 1..=m`.
pub fn integrated_gradients(net: &Network, x: &Tensor, baseline: &Tensor, out: usize, steps: usize) -> Result<IgResult> {
    if steps == 0 {
        return Err(Error::invalid("steps must be at least 1"));
    }
    if x.dims() != baseline.dims() {
        return Err(Error::invalid(format!(
            "baseline {:?} does not match input {:?}",
            baseline.dims(),
            x.dims()
        )));
    }
    let diff = x.sub(baseline)?;
    let grads: Vec<Tensor> = (1..=steps)
        .into_par_iter()
        .map(|t| {
            let a = t as f64 / steps as f64;
            let point = baseline.zip_with(&diff, |b, d| b + a * d)?;
            Ok(net.gradient(&point, out)?.swap_remove(0))
        })
        .collect::<Result<_>>()?;
    let mut avg = vec![0.0; x.len()];
    for g in &grads {
        for (s, v) in avg.iter_mut().zip(g.data()) {
            *s += v;
        }
    }
    let attributions: Vec<f64> = avg
        .iter()
        .zip(diff.data())
        .map(|(s, d)| d * s / steps as f64)
        .collect();
    let fx = net.forward(x)?.output().data()[out];
    let fb = net.forward(baseline)?.output().data()[out];
    let gap = (attributions.iter().sum::<f64>() - (fx - fb)).abs();
    Ok(IgResult {
        baseline: baseline.clone(),
        attributions: Tensor::new(x.dims().to_vec(), attributions)?,
        steps,
        output_value: fx,
        baseline_value: fb,
        completeness_gap: gap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    /// `None` unless exactly one feature differs from the baseline and the
    /// outputs differ; otherwise whether that feature got `|attr| > 0`.
    pub sensitivity: Option<bool>,
    /// Largest absolute difference between the two networks' attributions.
    pub invariance_max_diff: f64,
    pub implementation_invariant: bool,
}

/// Checks Sensitivity on `net` and Implementation Invariance between `net`
/// and a functionally identical `twin`.
pub fn check_axioms(net: &Network, twin: &Network, x: &Tensor, baseline: &Tensor, out: usize, steps: usize) -> Result<AxiomReport> {
    if net.input_shape() != twin.input_shape() {
        return Err(Error::invalid("networks have different input shapes"));
    }
    let a = integrated_gradients(net, x, baseline, out, steps)?;
    let b = integrated_gradients(twin, x, baseline, out, steps)?;
    let differing: Vec<usize> = x
        .data()
        .iter()
        .zip(baseline.data())
        .enumerate()
        .filter(|(_, (u, v))| u != v)
        .map(|(i, _)| i)
        .collect();
    let sensitivity = (differing.len() == 1 && a.output_value != a.baseline_value)
        .then(|| a.attributions.data()[differing[0]].abs() > 0.0);
    let max_diff = a
        .attributions
        .data()
        .iter()
        .zip(b.attributions.data())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    Ok(AxiomReport {
        sensitivity,
        invariance_max_diff: max_diff,
        implementation_invariant: max_diff <= 1e-6,
    })
}
