//! Layer-wise relevance propagation.
//!
//! Relevance starts at the explained output and is pushed back layer by
//! layer. Linear maps (dense, convolution, graph convolution) use one of the
//! rules in [`Rule`]; element-wise activations pass relevance through
//! unchanged; pooling splits it in proportion to contributions (max pooling:
//! winner takes all).

mod gnn;
mod lstm;
mod perturb;
mod taylor;

pub use gnn::{gnn_lrp, node_relevance, walk_count, walks_to_csv, WalkRelevance, MAX_WALKS};
pub use lstm::lstm_lrp;
pub use perturb::{perturbation_curve, perturbation_curve_ordered, relevance_order, Removal};
pub use taylor::{taylor_relevance, TaylorResult, ROOT_TOLERANCE};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::{Cache, Layer};
use crate::network::{ActivationTrace, Network};
use crate::tensor::Tensor;

/// Redistribution rule for a linear map `z_k = sum_j a_j w_jk + b_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum Rule {
    /// `R_j = sum_k a_j w_jk / (z_k + eps sign(z_k)) R_k`
    Epsilon { eps: f64 },
    /// Epsilon-free rule on `w + gamma max(0, w)` (bias treated alike).
    Gamma { gamma: f64 },
    /// `R_j = sum_k w_jk^2 / sum_j' w_j'k^2 R_k`, independent of the input.
    WSquare,
}

impl Default for Rule {
    fn default() -> Self {
        Rule::Epsilon { eps: 1e-6 }
    }
}

impl Rule {
    pub const DEFAULT_GAMMA: f64 = 0.25;

    fn check(self) -> Result<()> {
        match self {
            Rule::Epsilon { eps } if !(eps >= 0.0) => Err(Error::Config("epsilon must be >= 0".into())),
            Rule::Gamma { gamma } if !(gamma >= 0.0) => Err(Error::Config("gamma must be >= 0".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrpConfig {
    pub dense: Rule,
    pub conv: Rule,
    pub graph: Rule,
    /// Overrides the rule of the first layer (e.g. the w² rule for inputs).
    pub input_rule: Option<Rule>,
    /// Stabilizer for pooling and LSTM splits.
    pub epsilon: f64,
}

impl Default for LrpConfig {
    fn default() -> Self {
        Self {
            dense: Rule::default(),
            conv: Rule::default(),
            graph: Rule::default(),
            input_rule: None,
            epsilon: 1e-6,
        }
    }
}

impl LrpConfig {
    /// Same rule everywhere, pooling stabilizer taken from an epsilon rule.
    pub fn uniform(rule: Rule) -> Self {
        let epsilon = match rule {
            Rule::Epsilon { eps } => eps,
            _ => 0.0,
        };
        Self {
            dense: rule,
            conv: rule,
            graph: rule,
            input_rule: None,
            epsilon,
        }
    }

    fn check(&self) -> Result<()> {
        self.dense.check()?;
        self.conv.check()?;
        self.graph.check()?;
        if let Some(r) = self.input_rule {
            r.check()?;
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config("epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

/// Relevance of every activation, aligned with the activation trace
/// (`layers[0]` is the input, the last entry is the output).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceMap {
    pub layers: Vec<Tensor>,
    pub output: usize,
}

impl RelevanceMap {
    pub fn input(&self) -> &Tensor {
        &self.layers[0]
    }

    /// `layer,index,relevance` rows; layer 0 is the input.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,index,relevance\n");
        for (l, t) in self.layers.iter().enumerate() {
            for (i, v) in t.data().iter().enumerate() {
                writeln!(s, "{l},{i},{v:e}").unwrap();
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// Sum of relevance per trace position.
    pub layer_sums: Vec<f64>,
    /// Largest `|sum_{l} - sum_{l+1}|` over adjacent positions.
    pub max_deviation: f64,
    pub min_input_relevance: f64,
}

pub fn check_conservation(map: &RelevanceMap) -> ConservationReport {
    let sums: Vec<f64> = map.layers.iter().map(|t| t.sum()).collect();
    let max_deviation = sums.windows(2).map(|w| (w[0] - w[1]).abs()).fold(0.0, f64::max);
    let min_input_relevance = map.input().data().iter().cloned().fold(f64::INFINITY, f64::min);
    ConservationReport {
        layer_sums: sums,
        max_deviation,
        min_input_relevance,
    }
}

fn stabilize(z: f64, eps: f64) -> f64 {
    // sign(0) is taken as +1
    if z >= 0.0 {
        z + eps
    } else {
        z - eps
    }
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// A linear map given as its list of `(output, input, weight)` connections.
struct LinearMap<'a> {
    n_in: usize,
    n_out: usize,
    edges: &'a [(usize, usize, f64)],
    bias: &'a dyn Fn(usize) -> f64,
}

impl LinearMap<'_> {
    fn relevance(&self, rule: Rule, a: &[f64], r_out: &[f64]) -> Vec<f64> {
        let mut r_in = vec![0.0; self.n_in];
        match rule {
            Rule::WSquare => {
                let mut den = vec![0.0; self.n_out];
                for &(o, _, w) in self.edges {
                    den[o] += w * w;
                }
                for &(o, i, w) in self.edges {
                    r_in[i] += safe_div(w * w, den[o]) * r_out[o];
                }
            }
            Rule::Epsilon { .. } | Rule::Gamma { .. } => {
                let (eps, gamma) = match rule {
                    Rule::Epsilon { eps } => (eps, 0.0),
                    Rule::Gamma { gamma } => (0.0, gamma),
                    Rule::WSquare => unreachable!(),
                };
                let lift = |w: f64| w + gamma * w.max(0.0);
                let mut z: Vec<f64> = (0..self.n_out).map(|o| lift((self.bias)(o))).collect();
                for &(o, i, w) in self.edges {
                    z[o] += a[i] * lift(w);
                }
                let scale: Vec<f64> = z
                    .iter()
                    .zip(r_out)
                    .map(|(&zo, &r)| safe_div(r, stabilize(zo, eps)))
                    .collect();
                for &(o, i, w) in self.edges {
                    r_in[i] += a[i] * lift(w) * scale[o];
                }
            }
        }
        r_in
    }
}

fn dense_edges(weight: &Tensor) -> Vec<(usize, usize, f64)> {
    let (rows, cols) = (weight.dims()[0], weight.dims()[1]);
    let w = weight.data();
    let mut e = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            e.push((r, c, w[r * cols + c]));
        }
    }
    e
}

/// Proportional split of each output over the inputs that were summed into
/// it, `groups[o]` listing the inputs of output `o`.
fn proportional(n_in: usize, groups: &[Vec<usize>], a: &[f64], r_out: &[f64], eps: f64) -> Vec<f64> {
    let mut r_in = vec![0.0; n_in];
    for (o, members) in groups.iter().enumerate() {
        let z: f64 = members.iter().map(|&i| a[i]).sum();
        let s = safe_div(r_out[o], stabilize(z, eps));
        for &i in members {
            r_in[i] += a[i] * s;
        }
    }
    r_in
}

fn pool_groups(dims: &[usize], window: usize) -> Vec<Vec<usize>> {
    let (c, h, w) = (dims[0], dims[1], dims[2]);
    let (oh, ow) = (h / window, w / window);
    let mut groups = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut g = Vec::with_capacity(window * window);
                for i in 0..window {
                    for j in 0..window {
                        g.push((ch * h + y * window + i) * w + x * window + j);
                    }
                }
                groups.push(g);
            }
        }
    }
    groups
}

/// Pushes relevance through layer `index` of a recorded trace.
fn layer_relevance(
    layer: &Layer,
    index: usize,
    trace: &ActivationTrace,
    r_out: &Tensor,
    cfg: &LrpConfig,
) -> Result<Tensor> {
    let x = &trace.activations[index];
    let a = x.data();
    let r = r_out.data();
    let rule_for = |r: Rule| if index == 0 { cfg.input_rule.unwrap_or(r) } else { r };
    let data = match layer {
        Layer::Dense(d) => {
            let edges = dense_edges(&d.weight);
            let bias = |o: usize| d.bias.data()[o];
            LinearMap {
                n_in: x.len(),
                n_out: r.len(),
                edges: &edges,
                bias: &bias,
            }
            .relevance(rule_for(cfg.dense), a, r)
        }
        Layer::Conv2D(c) => {
            let mut edges = Vec::new();
            let fs = c.filters.data();
            c.for_each_connection(x.dims(), |o, i, w| edges.push((o, i, fs[w])));
            let per = r.len() / c.filters.dims()[0];
            let bias = |o: usize| c.bias.data()[o / per];
            LinearMap {
                n_in: x.len(),
                n_out: r.len(),
                edges: &edges,
                bias: &bias,
            }
            .relevance(rule_for(cfg.conv), a, r)
        }
        Layer::GraphConv(g) => {
            let lap = trace
                .laplacian()
                .ok_or_else(|| Error::invalid("graph convolution relevance needs the laplacian"))?;
            let n = lap.dims()[0];
            let (din, dout) = (g.weight.dims()[0], g.weight.dims()[1]);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    let l = lap.get(&[i, j]);
                    if l == 0.0 {
                        continue;
                    }
                    for f in 0..din {
                        for o in 0..dout {
                            edges.push((i * dout + o, j * din + f, l * g.weight.get(&[f, o])));
                        }
                    }
                }
            }
            let bias = |_: usize| 0.0;
            LinearMap {
                n_in: x.len(),
                n_out: r.len(),
                edges: &edges,
                bias: &bias,
            }
            .relevance(rule_for(cfg.graph), a, r)
        }
        Layer::SumPool => {
            let inner = r.len();
            let groups: Vec<Vec<usize>> = if x.rank() == 1 {
                vec![(0..x.len()).collect()]
            } else {
                (0..inner).map(|o| (o..x.len()).step_by(inner).collect()).collect()
            };
            proportional(x.len(), &groups, a, r, cfg.epsilon)
        }
        Layer::AvgPool2D { window } => proportional(x.len(), &pool_groups(x.dims(), *window), a, r, cfg.epsilon),
        Layer::MaxPool2D { .. } => {
            let Cache::Argmax(argmax) = &trace.caches[index] else {
                unreachable!("max pool records its winners")
            };
            let mut out = vec![0.0; x.len()];
            for (&i, &rv) in argmax.iter().zip(r) {
                out[i] += rv;
            }
            out
        }
        Layer::Flatten => r.to_vec(),
        Layer::Lstm(cell) => {
            let Cache::Lstm(steps) = &trace.caches[index] else {
                unreachable!("lstm records its steps")
            };
            lstm::relevance(cell, steps, r, cfg.epsilon)
        }
        Layer::Embedding(_) => {
            let dim = r.len() / x.len().max(1);
            r.chunks(dim.max(1)).map(|c| c.iter().sum()).collect()
        }
        Layer::Attention(_) => {
            return Err(Error::Unsupported(format!(
                "layer {index}: relevance propagation through attention is not supported"
            )))
        }
    };
    Ok(Tensor::from_parts(x.dims().to_vec(), data))
}

/// Relevance of every activation for output `out`, starting from
/// `R = f(x)_out` on that output and zero elsewhere.
pub fn lrp_propagate(net: &Network, x: &Tensor, out: usize, cfg: &LrpConfig) -> Result<RelevanceMap> {
    let trace = net.forward(x)?;
    propagate_trace(net, &trace, out, cfg, 1.0)
}

/// [`lrp_propagate`] for networks containing graph convolutions.
pub fn lrp_propagate_graph(net: &Network, x: &Tensor, laplacian: &Tensor, out: usize, cfg: &LrpConfig) -> Result<RelevanceMap> {
    let trace = net.forward_graph(x, laplacian)?;
    propagate_trace(net, &trace, out, cfg, 1.0)
}

/// Propagation over an existing trace; the starting relevance is
/// `scale * f(x)_out`.
pub fn propagate_trace(net: &Network, trace: &ActivationTrace, out: usize, cfg: &LrpConfig, scale: f64) -> Result<RelevanceMap> {
    cfg.check()?;
    if let Some(i) = net.layers().iter().position(|l| matches!(l, Layer::Attention(_))) {
        return Err(Error::Unsupported(format!(
            "layer {i}: relevance propagation through attention is not supported"
        )));
    }
    let y = trace.output();
    if out >= y.len() {
        return Err(Error::invalid(format!("output index {out} out of range for {} outputs", y.len())));
    }
    let n = net.layers().len();
    let mut layers = vec![Tensor::zeros(&[0]); n + 1];
    let mut start = Tensor::zeros(y.dims());
    start.data_mut()[out] = scale * y.data()[out];
    layers[n] = start;
    for i in (0..n).rev() {
        layers[i] = layer_relevance(&net.layers()[i], i, trace, &layers[i + 1], cfg)?;
    }
    Ok(RelevanceMap { layers, output: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::{Activation, Dense};

    #[test]
    fn pass_through_neuron() {
        let net = Network::new(
            vec![1],
            vec![Layer::Dense(Dense {
                weight: Tensor::matrix(1, 1, vec![1.0]).unwrap(),
                bias: Tensor::vector(vec![0.0]),
                activation: Activation::Identity,
            })],
        )
        .unwrap();
        let map = lrp_propagate(&net, &Tensor::vector(vec![2.5]), 0, &LrpConfig::uniform(Rule::Epsilon { eps: 0.0 })).unwrap();
        assert_eq!(map.input().data(), &[2.5]);
    }

    #[test]
    fn negative_parameters_rejected() {
        let net = Network::new(vec![1], vec![Layer::SumPool]).unwrap();
        let cfg = LrpConfig::uniform(Rule::Gamma { gamma: -1.0 });
        assert!(lrp_propagate(&net, &Tensor::vector(vec![1.0]), 0, &cfg).is_err());
    }
}
