#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xattr::layer::{Attention, Dense, Embedding};
use xattr::lrp::{
    lrp_propagate, lrp_propagate_graph, lstm_lrp, perturbation_curve, perturbation_curve_ordered, LrpConfig, RelevanceMap, Removal,
};
use xattr::models::{barabasi_albert, zoo, GraphInstance};
use xattr::{Activation, Layer, Network, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, dims: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn uniform_row(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Random dense layer with nonzero bias.
pub fn dense(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize, act: Activation) -> Layer {
    Layer::Dense(Dense {
        weight: uniform(rng, &[outputs, inputs], -1.0, 1.0),
        bias: uniform(rng, &[outputs], -0.5, 0.5),
        activation: act,
    })
}

pub fn attention(rng: &mut ChaCha8Rng, model: usize, heads: usize, dk: usize, dv: usize, out: usize) -> Layer {
    Layer::Attention(Attention {
        heads,
        key_dim: dk,
        value_dim: dv,
        w_query: uniform(rng, &[model, heads * dk], -1.0, 1.0),
        w_key: uniform(rng, &[model, heads * dk], -1.0, 1.0),
        w_value: uniform(rng, &[model, heads * dv], -1.0, 1.0),
        w_out: uniform(rng, &[heads * dv, out], -1.0, 1.0),
    })
}

pub fn embedding(rng: &mut ChaCha8Rng, vocab: usize, dim: usize) -> Layer {
    Layer::Embedding(Embedding {
        table: uniform(rng, &[vocab, dim], -1.0, 1.0),
    })
}

const ACTS: [Activation; 4] = [Activation::Identity, Activation::Relu, Activation::Sigmoid, Activation::Tanh];

/// A differentiable network, an input and (for graph models) a Laplacian.
pub struct Case {
    pub net: Network,
    pub x: Tensor,
    pub laplacian: Option<Tensor>,
    pub kind: &'static str,
}

/// Cycles through dense, convolution + pooling, LSTM, graph convolution
/// and attention stacks.
pub fn random_case(seed: u64) -> Case {
    let mut r = rng(seed);
    let act = ACTS[r.random_range(0..ACTS.len())];
    match seed % 5 {
        0 => {
            let m = r.random_range(2..7);
            let h = r.random_range(2..6);
            let out_act = if r.random() { Activation::Softmax } else { Activation::Sigmoid };
            let net = Network::new(
                vec![m],
                vec![dense(&mut r, m, h, act), dense(&mut r, h, 3, out_act)],
            )
            .unwrap();
            let x = uniform(&mut r, &[m], -1.0, 1.0);
            Case { net, x, laplacian: None, kind: "dense" }
        }
        1 => {
            let pool = if r.random() {
                Layer::MaxPool2D { window: 2 }
            } else {
                Layer::AvgPool2D { window: 2 }
            };
            let conv = zoo::conv2d(&mut r, 2, 3, 3, act);
            let net = Network::new(
                vec![2, 4, 4],
                vec![conv, pool, Layer::Flatten, dense(&mut r, 12, 2, Activation::Identity)],
            )
            .unwrap();
            let x = uniform(&mut r, &[2, 4, 4], -1.0, 1.0);
            Case { net, x, laplacian: None, kind: "conv" }
        }
        2 => {
            let steps = r.random_range(1..5);
            let net = Network::new(
                vec![0, 3],
                vec![zoo::lstm(&mut r, 3, 4), dense(&mut r, 4, 2, Activation::Sigmoid)],
            )
            .unwrap();
            let x = uniform(&mut r, &[steps, 3], -1.0, 1.0);
            Case { net, x, laplacian: None, kind: "lstm" }
        }
        3 => {
            let n = r.random_range(3..7);
            let g = xattr::models::barabasi_albert(n, 1, seed).unwrap();
            let net = Network::new(
                vec![0, 2],
                vec![
                    zoo::graph_conv(&mut r, 2, 3, act),
                    zoo::graph_conv(&mut r, 3, 3, Activation::Tanh),
                    Layer::SumPool,
                    dense(&mut r, 3, 2, Activation::Identity),
                ],
            )
            .unwrap();
            let x = uniform(&mut r, &[n, 2], -1.0, 1.0);
            Case { net, x, laplacian: Some(g.laplacian), kind: "graph" }
        }
        _ => {
            let steps = r.random_range(1..5);
            let net = Network::new(
                vec![0, 4],
                vec![
                    attention(&mut r, 4, 2, 3, 2, 3),
                    Layer::SumPool,
                    dense(&mut r, 3, 2, act),
                ],
            )
            .unwrap();
            let x = uniform(&mut r, &[steps, 4], -1.0, 1.0);
            Case { net, x, laplacian: None, kind: "attention" }
        }
    }
}

pub fn eval(net: &Network, x: &Tensor, lap: Option<&Tensor>, out: usize) -> f64 {
    let t = match lap {
        Some(l) => net.forward_graph(x, l).unwrap(),
        None => net.forward(x).unwrap(),
    };
    t.output().data()[out]
}

/// Central differences of output `out` w.r.t. every input element.
pub fn fd_gradient(net: &Network, x: &Tensor, lap: Option<&Tensor>, out: usize, h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let mut m = x.clone();
            m.data_mut()[i] -= h;
            (eval(net, &p, lap, out) - eval(net, &m, lap, out)) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Rows for a background set, uniform in `[-1, 1]`.
pub fn background(seed: u64, rows: usize, m: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..rows).map(|_| uniform_row(&mut r, m, -1.0, 1.0)).collect()
}

/// Brute-force Shapley values by enumerating every subset, written
/// independently of the library estimator. The value of a coalition is
/// the background mean of the model with the coalition's features taken
/// from `x`.
pub fn brute_force_shapley(net: &Network, x: &[f64], bg: &[Vec<f64>], out: usize) -> (f64, Vec<f64>) {
    let m = x.len();
    let value = |mask: usize| -> f64 {
        let mut total = 0.0;
        for b in bg {
            let z: Vec<f64> = (0..m).map(|j| if mask >> j & 1 == 1 { x[j] } else { b[j] }).collect();
            total += net.predict(&z).unwrap()[out];
        }
        total / bg.len() as f64
    };
    let values: Vec<f64> = (0..1usize << m).map(value).collect();
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        for s in 0..1usize << m {
            if s >> i & 1 == 1 {
                continue;
            }
            let size = s.count_ones() as usize;
            let w = fact(size) * fact(m - size - 1) / fact(m);
            *p += w * (values[s | 1 << i] - values[s]);
        }
    }
    (values[0], phi)
}

/// Sets every dense, convolution and LSTM signal bias to zero.
pub fn zero_biases(layers: &mut [Layer]) {
    for l in layers {
        match l {
            Layer::Dense(d) => d.bias.data_mut().iter_mut().for_each(|b| *b = 0.0),
            Layer::Conv2D(c) => c.bias.data_mut().iter_mut().for_each(|b| *b = 0.0),
            Layer::Lstm(c) => c.signal.bias.data_mut().iter_mut().for_each(|b| *b = 0.0),
            _ => {}
        }
    }
}

/// Embedding + LSTM + softmax head trained on the toy sentiment task.
pub fn toy_sentiment(len: usize) -> (Network, zoo::SentimentTask) {
    let task = zoo::synth_sentiment(400, len, 0).unwrap();
    let mut net = zoo::sentiment_lstm(task.vocab.len(), 6, 8, 0).unwrap();
    let cfg = xattr::train::FitConfig {
        epochs: 30,
        lr: 0.02,
        batch_size: 16,
        seed: 0,
    };
    zoo::train_classifier(&mut net, &task.sentences, &task.labels, &cfg).unwrap();
    (net, task)
}

/// Measured quantities of one revision cycle on biased recidivism data.
pub struct RevisionRun {
    pub degree_before: f64,
    pub degree_after: f64,
    pub acc_before: f64,
    pub acc_after: f64,
    pub revision: xattr::fuzzy::Revision,
}

/// Base model fitted by standard training plus Sat ascent on the data-fit
/// formula, then revised with the mid-bin group equivalence constraint.
pub fn revision_run(seed: u64) -> RevisionRun {
    use xattr::fuzzy::*;
    use xattr::train::accuracy;
    let data = xattr::models::synth_recidivism(2000, 1.0, seed).unwrap();
    let mut net = zoo::train_tabular(&data, &zoo::TabularTraining { seed, ..Default::default() }).unwrap();
    let g = Grounding::standard(&data);
    let kb = KnowledgeBase::parse("p = 0.5\nforall x: equiv(P(x), label(x)) @1").unwrap();
    train_constrained(&mut net, &kb, &g, &data, &TrainConfig { epochs: 200, lr: 0.005, seed }).unwrap();
    let acc_before = accuracy(&net, &data.rows, &data.labels).unwrap();
    let constraint = WeightedFormula {
        formula: parse_formula("groupequiv(P, group, 3, 1)").unwrap(),
        weight: 0.1,
    };
    let cfg = CycleConfig {
        train: TrainConfig { epochs: 50, lr: 0.005, seed },
        protected: Some("group".into()),
        bins: 3,
        parity_rows: 0,
        background: 32,
    };
    let revision = revise(&mut net, &kb, &[constraint], &g, &data, &cfg).unwrap();
    let acc_after = accuracy(&net, &data.rows, &data.labels).unwrap();
    RevisionRun {
        degree_before: revision.groups_before.as_ref().unwrap().degree(1).unwrap(),
        degree_after: revision.groups_after.as_ref().unwrap().degree(1).unwrap(),
        acc_before,
        acc_after,
        revision,
    }
}

/// Zero-bias relu network of one of four shapes, input in `[0, 1]`.
pub fn positive_case(seed: u64) -> (Network, Tensor, Option<Tensor>) {
    let mut r = rng(seed);
    match seed % 4 {
        0 => {
            let m = r.random_range(2..6);
            let h = r.random_range(2..6);
            let mut layers = vec![dense(&mut r, m, h, Activation::Relu), dense(&mut r, h, 3, Activation::Relu)];
            layers.push(dense(&mut r, 3, 2, Activation::Identity));
            zero_biases(&mut layers);
            (Network::new(vec![m], layers).unwrap(), uniform(&mut r, &[m], 0.0, 1.0), None)
        }
        1 => {
            let pool = if r.random() {
                Layer::MaxPool2D { window: 2 }
            } else {
                Layer::AvgPool2D { window: 2 }
            };
            let mut layers = vec![
                zoo::conv2d(&mut r, 2, 3, 3, Activation::Relu),
                pool,
                Layer::Flatten,
                dense(&mut r, 12, 2, Activation::Identity),
            ];
            zero_biases(&mut layers);
            (Network::new(vec![2, 4, 4], layers).unwrap(), uniform(&mut r, &[2, 4, 4], 0.0, 1.0), None)
        }
        2 => {
            let m = r.random_range(2..6);
            let mut layers = vec![dense(&mut r, m, 4, Activation::Relu), Layer::SumPool];
            zero_biases(&mut layers);
            (Network::new(vec![m], layers).unwrap(), uniform(&mut r, &[m], 0.0, 1.0), None)
        }
        _ => {
            let n = r.random_range(2..7);
            let g = barabasi_albert(n, 1, seed).unwrap();
            let layers = vec![
                zoo::graph_conv(&mut r, 2, 3, Activation::Relu),
                zoo::graph_conv(&mut r, 3, 2, Activation::Relu),
                Layer::SumPool,
            ];
            (Network::new(vec![0, 2], layers).unwrap(), uniform(&mut r, &[n, 2], 0.0, 1.0), Some(g.laplacian))
        }
    }
}

pub fn propagate(net: &Network, x: &Tensor, lap: Option<&Tensor>, out: usize, cfg: &LrpConfig) -> xattr::Result<RelevanceMap> {
    match lap {
        Some(l) => lrp_propagate_graph(net, x, l, out, cfg),
        None => lrp_propagate(net, x, out, cfg),
    }
}

/// Node sequences of length `depth + 1` where each step stays put or
/// follows an edge, enumerated depth-first.
pub fn enumerate_walks(g: &GraphInstance, depth: usize) -> BTreeSet<Vec<usize>> {
    fn extend(g: &GraphInstance, walk: &mut Vec<usize>, depth: usize, out: &mut BTreeSet<Vec<usize>>) {
        if walk.len() == depth + 1 {
            out.insert(walk.clone());
            return;
        }
        let last = *walk.last().unwrap();
        for next in 0..g.n {
            if next == last || g.adjacency.get(&[last, next]) == 1.0 {
                walk.push(next);
                extend(g, walk, depth, out);
                walk.pop();
            }
        }
    }
    let mut out = BTreeSet::new();
    for start in 0..g.n {
        extend(g, &mut vec![start], depth, &mut out);
    }
    out
}

pub fn gcn(depth: usize, seed: u64) -> Network {
    let mut r = rng(seed);
    let mut layers = Vec::new();
    let mut width = 2;
    for t in 0..depth {
        let out = if t + 1 == depth { 2 } else { 3 };
        layers.push(zoo::graph_conv(&mut r, width, out, Activation::Relu));
        width = out;
    }
    layers.push(Layer::SumPool);
    Network::new(vec![0, 2], layers).unwrap()
}

/// A graph of 1 to 8 nodes and a walk depth of 1 to 3.
pub fn walk_case(seed: u64) -> (GraphInstance, usize) {
    let mut r = rng(seed);
    let n = r.random_range(1..=8);
    let g = match n {
        1 => GraphInstance::from_edges(1, &[], 0).unwrap(),
        2 => GraphInstance::from_edges(2, &[(0, 1)], 0).unwrap(),
        _ => barabasi_albert(n, r.random_range(1..=3).min(n - 2), seed).unwrap(),
    };
    (g, r.random_range(1..=3))
}

/// Per sentence of the toy sentiment task: mean score under random-order
/// removal minus mean score under relevance-order removal.
pub fn removal_area_gaps(n: u64) -> Vec<f64> {
    let (net, task) = toy_sentiment(6);
    let area = |c: &[f64]| c.iter().sum::<f64>() / c.len() as f64;
    (0..n)
        .map(|seed| {
            let s = &task.sentences[100 + seed as usize];
            let y = net.forward(s).unwrap().output().data().to_vec();
            let out = if y[1] > y[0] { 1 } else { 0 };
            let rel = lstm_lrp(&net, s, out, &LrpConfig::default()).unwrap();
            let by_rel = perturbation_curve(&net, s, &rel, &Removal::ZeroRow, out, 6).unwrap();
            let mut order: Vec<usize> = (0..6).collect();
            order.shuffle(&mut rng(seed));
            let by_rand = perturbation_curve_ordered(&net, s, &order, &Removal::ZeroRow, out, 6).unwrap();
            area(&by_rand) - area(&by_rel)
        })
        .collect()
}

/// Small MLPs with 1 to 8 inputs and mixed activations.
pub fn shapley_suite() -> Vec<Network> {
    let acts = [Activation::Tanh, Activation::Sigmoid, Activation::Relu, Activation::Identity];
    (0..16)
        .map(|i| {
            let m = 1 + i % 8;
            let hidden = if i % 3 == 0 { vec![] } else { vec![3 + i % 4] };
            let out = if i % 2 == 0 { Activation::Sigmoid } else { Activation::Softmax };
            let outputs = if out == Activation::Softmax { 2 } else { 1 };
            xattr::models::zoo::mlp(m, &hidden, outputs, acts[i % 4], out, i as u64).unwrap()
        })
        .collect()
}

pub struct CreditCase {
    pub data: xattr::models::TabularDataset,
    pub net: Network,
    pub query: xattr::counterfactual::CfQuery,
}

pub fn credit_case() -> CreditCase {
    let data = xattr::models::synth_credit(2000, 0).unwrap();
    let net = zoo::train_tabular(&data, &zoo::TabularTraining::default()).unwrap();
    let row = (0..data.n_rows())
        .find(|&i| net.predict(&data.rows[i]).unwrap()[0] < 0.3)
        .unwrap();
    let mut query = xattr::counterfactual::CfQuery::new(data.rows[row].clone(), 1, data.ranges());
    query.immutable = vec![data.feature_index("age").unwrap()];
    query.discrete = (0..data.n_features()).filter(|&f| data.kinds[f].is_discrete()).collect();
    CreditCase { data, net, query }
}

pub fn named_attribution(names: &[&str], phi: &[f64]) -> xattr::shapley::Attribution {
    xattr::shapley::Attribution {
        phi0: 0.1,
        phi: phi.to_vec(),
        stderr: None,
        feature_names: names.iter().map(|s| s.to_string()).collect(),
        output: 0,
    }
}

pub fn diet_user(age: u32, vegetarian: bool) -> xattr::nle::UserModel {
    xattr::nle::UserModel {
        age,
        vegetarian,
        ..Default::default()
    }
}

const TAGS: [&str; 5] = ["meat", "fish", "dairy", "", "plural"];

/// A table of `n` entities with random tags, kinds and alternatives, and a
/// user with random diet and goals.
pub fn random_world(r: &mut ChaCha8Rng, n: usize) -> (xattr::nle::KnowledgeTable, xattr::nle::UserModel) {
    let mut text = String::new();
    for k in 0..n {
        let tag = TAGS[r.random_range(0..TAGS.len())];
        let kind = if r.random::<f64>() < 0.3 { "beverage" } else { "solid" };
        let nut = format!("n{}", r.random_range(0..3));
        let mut alts: Vec<String> = (0..n).filter(|_| r.random::<f64>() < 0.5).map(|j| format!("e{j}")).collect();
        alts.shuffle(r);
        text.push_str(&format!("entity e{k} | food {k} | {kind} | {tag} | {nut} | {}\n", alts.join(", ")));
    }
    for k in 0..3 {
        text.push_str(&format!("nutrient n{k} | harm {k} | benefit {k}\n"));
    }
    text.push_str("risk old | People over 60 years old | age>=60 | harm 0\n");
    let mut u = diet_user(r.random_range(18..90), r.random());
    for k in 0..n {
        match r.random_range(0..4) {
            0 => {
                u.goals.insert(format!("e{k}"), xattr::nle::Goal::Reduce);
            }
            1 => {
                u.goals.insert(format!("e{k}"), xattr::nle::Goal::Increase);
            }
            _ => {}
        }
    }
    (xattr::nle::KnowledgeTable::parse(&text).unwrap(), u)
}

/// Admissible alternatives in table order, recomputed from the raw rules.
pub fn oracle_alternatives(table: &xattr::nle::KnowledgeTable, u: &xattr::nle::UserModel, entity: &str, recent: &[String]) -> Vec<String> {
    let e = table.entity(entity).unwrap();
    e.alternatives
        .iter()
        .filter(|a| a.as_str() != entity)
        .filter(|a| {
            let tags = &table.entity(a).unwrap().tags;
            !(u.vegetarian && tags.iter().any(|t| t == "meat" || t == "fish"))
        })
        .filter(|a| !matches!(u.goals.get(*a), Some(xattr::nle::Goal::Reduce)))
        .filter(|a| !recent.contains(a))
        .cloned()
        .collect()
}

pub fn random_violation(r: &mut ChaCha8Rng) -> (xattr::nle::Violation, f64) {
    let period = if r.random() { xattr::nle::Period::Moment } else { xattr::nle::Period::Ongoing };
    let (v, phi) = if r.random() {
        (xattr::nle::Violation::new("e0", 5.0, 2.0, xattr::nle::Intention::Discourage, period).unwrap(), 0.4)
    } else {
        (xattr::nle::Violation::new("e0", 1.0, 3.0, xattr::nle::Intention::Encourage, period).unwrap(), -0.4)
    };
    let v = if r.random() { v.with_meal("dinner") } else { v };
    (v, phi)
}
