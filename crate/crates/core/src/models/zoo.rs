//! Initializers, small reference architectures and the toy tasks they are
//! trained on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::TabularDataset;
use super::graph::{barabasi_albert, GraphInstance};
use crate::error::{Error, Result};
use crate::layer::{Activation, Conv2D, Dense, Embedding, Gate, GraphConv, Layer, LstmCell, Padding};
use crate::network::{Meta, Network};
use crate::tensor::Tensor;
use crate::train::{fit, fit_rows, fold_standardization, Example, FitConfig, Loss};

fn glorot(rng: &mut ChaCha8Rng, dims: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = dims.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::from_parts(dims, data)
}

/// Glorot-uniform weights, zero bias.
pub fn dense(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize, activation: Activation) -> Layer {
    Layer::Dense(Dense {
        weight: glorot(rng, vec![outputs, inputs], inputs, outputs),
        bias: Tensor::zeros(&[outputs]),
        activation,
    })
}

pub fn conv2d(rng: &mut ChaCha8Rng, in_ch: usize, out_ch: usize, kernel: usize, activation: Activation) -> Layer {
    let fan = kernel * kernel;
    Layer::Conv2D(Conv2D {
        filters: glorot(rng, vec![out_ch, in_ch, kernel, kernel], in_ch * fan, out_ch * fan),
        bias: Tensor::zeros(&[out_ch]),
        stride: 1,
        padding: Padding::Same,
        activation,
    })
}

/// Forget-gate bias starts at 1.
pub fn lstm(rng: &mut ChaCha8Rng, inputs: usize, hidden: usize) -> Layer {
    let mut gate = |bias: f64| Gate {
        weight: glorot(rng, vec![hidden, inputs + hidden], inputs + hidden, hidden),
        bias: Tensor::filled(&[hidden], bias),
    };
    Layer::Lstm(LstmCell {
        signal: gate(0.0),
        input_gate: gate(0.0),
        forget_gate: gate(1.0),
        output_gate: gate(0.0),
    })
}

pub fn graph_conv(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize, activation: Activation) -> Layer {
    Layer::GraphConv(GraphConv {
        weight: glorot(rng, vec![inputs, outputs], inputs, outputs),
        activation,
    })
}

/// Fully connected network with `hidden` widths.
pub fn mlp(inputs: usize, hidden: &[usize], outputs: usize, hidden_act: Activation, output_act: Activation, seed: u64) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut width = inputs;
    for &h in hidden {
        layers.push(dense(&mut rng, width, h, hidden_act));
        width = h;
    }
    layers.push(dense(&mut rng, width, outputs, output_act));
    Network::new(vec![inputs], layers)
}

/// Copy of `net` whose final layer applies no activation (logits instead
/// of probabilities).
pub fn with_linear_output(net: &Network) -> Result<Network> {
    let mut layers = net.layers().to_vec();
    match layers.last_mut() {
        Some(Layer::Dense(d)) => d.activation = Activation::Identity,
        Some(Layer::Conv2D(c)) => c.activation = Activation::Identity,
        Some(Layer::GraphConv(g)) => g.activation = Activation::Identity,
        _ => return Err(Error::invalid("final layer has no activation to remove")),
    }
    let mut out = Network::new(net.input_shape().to_vec(), layers)?.with_meta(net.meta.clone());
    out.set_last_conv(net.last_conv_index())?;
    Ok(out)
}

/// Hyper-parameters of [`train_tabular`].
#[derive(Clone, Debug, PartialEq)]
pub struct TabularTraining {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TabularTraining {
    fn default() -> Self {
        Self {
            hidden: vec![16],
            epochs: 60,
            lr: 0.01,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Binary classifier with a sigmoid output, trained on standardized
/// features and returned with the standardization folded in so it reads
/// raw rows.
pub fn train_tabular(data: &TabularDataset, cfg: &TabularTraining) -> Result<Network> {
    let m = data.n_features();
    let mut net = mlp(m, &cfg.hidden, 1, Activation::Relu, Activation::Sigmoid, cfg.seed)?;
    let mean = data.mean();
    let std: Vec<f64> = data.std().into_iter().map(|s| if s > 0.0 { s } else { 1.0 }).collect();
    let rows: Vec<Vec<f64>> = data
        .rows
        .iter()
        .map(|r| r.iter().zip(&mean).zip(&std).map(|((x, mu), s)| (x - mu) / s).collect())
        .collect();
    let fit_cfg = FitConfig {
        epochs: cfg.epochs,
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    fit_rows(&mut net, &rows, &data.labels, &fit_cfg)?;
    fold_standardization(&mut net, &mean, &std)?;
    Ok(net.with_meta(Meta {
        feature_names: data.feature_names.clone(),
        class_names: vec!["negative".into(), "positive".into()],
    }))
}

/// `size x size` grayscale images. Class 1 contains a bright 3x3 square
/// at a random position over low noise; class 0 is noise only.
pub fn synth_images(n: usize, size: usize, seed: u64) -> Result<(Vec<Tensor>, Vec<usize>)> {
    if size < 4 {
        return Err(Error::invalid("images must be at least 4 pixels wide"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let mut px: Vec<f64> = (0..size * size).map(|_| rng.random_range(0.0..0.2)).collect();
        if label == 1 {
            let r0 = rng.random_range(0..size - 2);
            let c0 = rng.random_range(0..size - 2);
            for r in r0..r0 + 3 {
                for c in c0..c0 + 3 {
                    px[r * size + c] = rng.random_range(0.8..1.0);
                }
            }
        }
        images.push(Tensor::from_parts(vec![1, size, size], px));
        labels.push(label);
    }
    Ok((images, labels))
}

/// Two same-padded relu convolutions around a 2x2 max pool, then a
/// softmax head. The second convolution is marked as the last conv layer.
pub fn image_cnn(size: usize, seed: u64) -> Result<Network> {
    if size % 2 != 0 {
        return Err(Error::invalid("image size must be even"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = size / 2;
    let layers = vec![
        conv2d(&mut rng, 1, 4, 3, Activation::Relu),
        Layer::MaxPool2D { window: 2 },
        conv2d(&mut rng, 4, 4, 3, Activation::Relu),
        Layer::Flatten,
        dense(&mut rng, 4 * half * half, 2, Activation::Softmax),
    ];
    Network::new(vec![1, size, size], layers)?.with_last_conv(2)
}

pub fn train_classifier(net: &mut Network, inputs: &[Tensor], labels: &[usize], cfg: &FitConfig) -> Result<Vec<f64>> {
    let examples: Vec<Example<'_>> = inputs
        .iter()
        .zip(labels)
        .map(|(x, &t)| Example {
            input: x,
            laplacian: None,
            target: t,
        })
        .collect();
    fit(net, &examples, Loss::Categorical, cfg)
}

/// Token sequences whose label is the sign of the summed word polarity.
#[derive(Clone, Debug, PartialEq)]
pub struct SentimentTask {
    pub vocab: Vec<String>,
    pub polarity: Vec<f64>,
    pub sentences: Vec<Tensor>,
    pub labels: Vec<usize>,
}

const WORDS: [(&str, f64); 12] = [
    ("good", 1.0),
    ("great", 1.0),
    ("fun", 1.0),
    ("bad", -1.0),
    ("awful", -1.0),
    ("boring", -1.0),
    ("the", 0.0),
    ("movie", 0.0),
    ("was", 0.0),
    ("plot", 0.0),
    ("a", 0.0),
    ("very", 0.0),
];

/// `n` sentences of `len` tokens; sentences with zero total polarity are
/// redrawn.
pub fn synth_sentiment(n: usize, len: usize, seed: u64) -> Result<SentimentTask> {
    if len == 0 {
        return Err(Error::invalid("sentences need at least one token"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while sentences.len() < n {
        let ids: Vec<usize> = (0..len).map(|_| rng.random_range(0..WORDS.len())).collect();
        let score: f64 = ids.iter().map(|&i| WORDS[i].1).sum();
        if score == 0.0 {
            continue;
        }
        labels.push((score > 0.0) as usize);
        sentences.push(Tensor::vector(ids.iter().map(|&i| i as f64).collect()));
    }
    Ok(SentimentTask {
        vocab: WORDS.iter().map(|w| w.0.to_string()).collect(),
        polarity: WORDS.iter().map(|w| w.1).collect(),
        sentences,
        labels,
    })
}

/// Embedding, one LSTM cell and a two-class softmax head.
pub fn sentiment_lstm(vocab: usize, dim: usize, hidden: usize, seed: u64) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = (0..vocab * dim).map(|_| rng.random_range(-0.5..0.5)).collect();
    let layers = vec![
        Layer::Embedding(Embedding {
            table: Tensor::from_parts(vec![vocab, dim], table),
        }),
        lstm(&mut rng, dim, hidden),
        dense(&mut rng, hidden, 2, Activation::Softmax),
    ];
    Network::new(vec![0], layers)
}

/// Barabási–Albert graphs labelled by their growth factor: `m = 1` (trees,
/// class 0) and `m = 2` (class 1).
pub fn synth_graphs(n_graphs: usize, nodes: usize, seed: u64) -> Result<Vec<GraphInstance>> {
    (0..n_graphs)
        .map(|i| {
            let m = 1 + i % 2;
            let mut g = barabasi_albert(nodes, m, seed.wrapping_mul(1_000_003).wrapping_add(i as u64))?;
            g.label = m - 1;
            Ok(g)
        })
        .collect()
}

/// `depth` relu graph convolutions (the last one `classes` wide), a sum
/// pool, and a softmax head used only for training. Walk relevance runs on
/// the part before the head.
///
/// The convolutions have no bias and the node features are positive, so
/// their weights start non-negative; symmetric draws leave most narrow relu
/// units dead on every graph.
pub fn graph_classifier(depth: usize, hidden: usize, classes: usize, seed: u64) -> Result<Network> {
    if depth == 0 {
        return Err(Error::invalid("need at least one graph convolution"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut width = 2;
    for t in 0..depth {
        let out = if t + 1 == depth { classes } else { hidden };
        let mut layer = graph_conv(&mut rng, width, out, Activation::Relu);
        if let Layer::GraphConv(g) = &mut layer {
            g.weight.data_mut().iter_mut().for_each(|w| *w = w.abs());
        }
        layers.push(layer);
        width = out;
    }
    layers.push(Layer::SumPool);
    layers.push(dense(&mut rng, classes, classes, Activation::Softmax));
    Network::new(vec![0, 2], layers)
}

/// Layers up to and including the first sum pool.
pub fn readout(net: &Network) -> Result<Network> {
    let k = net
        .layers()
        .iter()
        .position(|l| matches!(l, Layer::SumPool))
        .ok_or_else(|| Error::invalid("network has no sum pool"))?;
    Network::new(net.input_shape().to_vec(), net.layers()[..=k].to_vec())
}

pub fn train_graph_classifier(net: &mut Network, graphs: &[GraphInstance], cfg: &FitConfig) -> Result<Vec<f64>> {
    let examples: Vec<Example<'_>> = graphs
        .iter()
        .map(|g| Example {
            input: &g.features,
            laplacian: Some(&g.laplacian),
            target: g.label,
        })
        .collect();
    fit(net, &examples, Loss::Categorical, cfg)
}
