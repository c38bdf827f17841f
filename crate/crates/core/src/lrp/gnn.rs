//! Walk relevances for graph convolution networks.
//!
//! A walk `(i_0, ..., i_T)` starts at an input node and follows nonzero
//! Laplacian entries through each of the `T` graph convolutions. Its
//! relevance is obtained by running the gamma rule backwards while
//! restricting every layer to the walk's node at that depth.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::{Activation, GraphConv, Layer};
use crate::models::GraphInstance;
use crate::network::Network;

/// Refuse to enumerate more walks than this.
pub const MAX_WALKS: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkRelevance {
    /// Input node first, output node last.
    pub walk: Vec<usize>,
    pub relevance: f64,
}

fn split_net(net: &Network) -> Result<Vec<&GraphConv>> {
    let layers = net.layers();
    let n = layers.len();
    if n < 2 || !matches!(layers[n - 1], Layer::SumPool) {
        return Err(Error::invalid("walk relevance needs graph convolutions followed by a sum pool"));
    }
    layers[..n - 1]
        .iter()
        .enumerate()
        .map(|(i, l)| match l {
            Layer::GraphConv(g) if g.activation == Activation::Relu => Ok(g),
            _ => Err(Error::invalid(format!("layer {i} is not a relu graph convolution"))),
        })
        .collect()
}

/// Number of node sequences of length `depth + 1` along nonzero entries of
/// `laplacian`, saturating at `u128::MAX`.
pub fn walk_count(laplacian: &crate::tensor::Tensor, depth: usize) -> u128 {
    let n = laplacian.dims()[0];
    let mut counts = vec![1u128; n];
    for _ in 0..depth {
        let mut next = vec![0u128; n];
        for i in 0..n {
            for j in 0..n {
                if laplacian.get(&[i, j]) != 0.0 {
                    next[i] = next[i].saturating_add(counts[j]);
                }
            }
        }
        counts = next;
    }
    counts.iter().fold(0u128, |a, &c| a.saturating_add(c))
}

/// Relevance of every walk for readout component `out`.
pub fn gnn_lrp(net: &Network, graph: &GraphInstance, out: usize, gamma: f64) -> Result<Vec<WalkRelevance>> {
    if !(gamma >= 0.0) {
        return Err(Error::Config("gamma must be >= 0".into()));
    }
    let convs = split_net(net)?;
    let depth = convs.len();
    let count = walk_count(&graph.laplacian, depth);
    if count > MAX_WALKS {
        return Err(Error::Unsupported(format!(
            "{count} walks exceed the limit of {MAX_WALKS}; reduce the number of graph convolutions or the graph size"
        )));
    }
    let trace = net.forward_graph(&graph.features, &graph.laplacian)?;
    let out_dim = trace.output().len();
    if out >= out_dim {
        return Err(Error::invalid(format!("output index {out} out of range for {out_dim} outputs")));
    }
    let n = graph.n;
    let lap = &graph.laplacian;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| lap.get(&[i, j]) != 0.0).collect())
        .collect();
    // lifted weights and, per layer and output node, the lifted
    // pre-activations z[i][k] = sum_j lap_ij sum_f h_jf w^_fk
    let lifted: Vec<Vec<f64>> = convs
        .iter()
        .map(|g| g.weight.data().iter().map(|&w| w + gamma * w.max(0.0)).collect())
        .collect();
    let z: Vec<Vec<f64>> = (0..depth)
        .map(|t| {
            let h = trace.activations[t].data();
            let (din, dout) = (convs[t].weight.dims()[0], convs[t].weight.dims()[1]);
            let mut zt = vec![0.0; n * dout];
            for i in 0..n {
                for &j in &neighbors[i] {
                    let l = lap.get(&[i, j]);
                    for f in 0..din {
                        let hv = h[j * din + f];
                        if hv == 0.0 {
                            continue;
                        }
                        for k in 0..dout {
                            zt[i * dout + k] += l * hv * lifted[t][f * dout + k];
                        }
                    }
                }
            }
            zt
        })
        .collect();
    let last = trace.activations[depth].data();
    let last_dim = convs[depth - 1].weight.dims()[1];

    struct Ctx<'a> {
        convs: &'a [&'a GraphConv],
        lifted: &'a [Vec<f64>],
        z: &'a [Vec<f64>],
        acts: &'a [crate::tensor::Tensor],
        lap: &'a crate::tensor::Tensor,
        neighbors: &'a [Vec<usize>],
    }

    // walk is built output-first in `rev`
    fn descend(ctx: &Ctx<'_>, layer: usize, node: usize, r: Vec<f64>, rev: &mut Vec<usize>, out: &mut Vec<WalkRelevance>) {
        if layer == 0 {
            let mut walk = rev.clone();
            walk.reverse();
            out.push(WalkRelevance {
                walk,
                relevance: r.iter().sum(),
            });
            return;
        }
        let t = layer - 1;
        let (din, dout) = (ctx.convs[t].weight.dims()[0], ctx.convs[t].weight.dims()[1]);
        let h = ctx.acts[t].data();
        for &j in &ctx.neighbors[node] {
            let l = ctx.lap.get(&[node, j]);
            let mut r_in = vec![0.0; din];
            for k in 0..dout {
                let zk = ctx.z[t][node * dout + k];
                if r[k] == 0.0 || zk == 0.0 {
                    continue;
                }
                let s = r[k] / zk;
                for f in 0..din {
                    r_in[f] += l * h[j * din + f] * ctx.lifted[t][f * dout + k] * s;
                }
            }
            rev.push(j);
            descend(ctx, t, j, r_in, rev, out);
            rev.pop();
        }
    }

    let ctx = Ctx {
        convs: &convs,
        lifted: &lifted,
        z: &z,
        acts: &trace.activations,
        lap,
        neighbors: &neighbors,
    };
    let per_node: Vec<Vec<WalkRelevance>> = (0..n)
        .into_par_iter()
        .map(|i| {
            // sum pool: output node i holds relevance h_T[i, out]
            let mut r = vec![0.0; last_dim];
            r[out] = last[i * last_dim + out];
            let mut acc = Vec::new();
            let mut rev = vec![i];
            descend(&ctx, depth, i, r, &mut rev, &mut acc);
            acc
        })
        .collect();
    let mut walks: Vec<WalkRelevance> = per_node.into_iter().flatten().collect();
    walks.sort_by(|a, b| a.walk.cmp(&b.walk));
    Ok(walks)
}

/// Sums walk relevances by their first (input) node.
pub fn node_relevance(walks: &[WalkRelevance], n: usize) -> Vec<f64> {
    let mut r = vec![0.0; n];
    for w in walks {
        r[w.walk[0]] += w.relevance;
    }
    r
}

/// `walk,relevance` rows, largest `|relevance|` first.
pub fn walks_to_csv(walks: &[WalkRelevance]) -> String {
    let mut sorted: Vec<&WalkRelevance> = walks.iter().collect();
    sorted.sort_by(|a, b| b.relevance.abs().total_cmp(&a.relevance.abs()).then(a.walk.cmp(&b.walk)));
    let mut s = String::from("walk,relevance\n");
    for w in sorted {
        let nodes: Vec<String> = w.walk.iter().map(|v| v.to_string()).collect();
        writeln!(s, "{},{:e}", nodes.join("-"), w.relevance).unwrap();
    }
    s
}
