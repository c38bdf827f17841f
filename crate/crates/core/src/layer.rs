//! Layer kinds, their forward evaluation and their reverse-mode derivatives.
//!
//! Every layer maps one tensor to one tensor. Layers that need more context
//! (graph convolutions need the graph Laplacian) receive it through the
//! network forward call.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{matmul, transpose, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
    /// Normalizes the whole layer output. Only valid on dense layers.
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softmax => "softmax",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "identity" => Activation::Identity,
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            "tanh" => Activation::Tanh,
            "softmax" => Activation::Softmax,
            _ => return None,
        })
    }

    pub fn apply(self, z: &[f64]) -> Vec<f64> {
        match self {
            Activation::Identity => z.to_vec(),
            Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Tanh => z.iter().map(|&v| v.tanh()).collect(),
            Activation::Softmax => softmax(z),
        }
    }

    /// Pulls `grad_out` (w.r.t. the activation output `out`) back to the
    /// pre-activation `z`. The relu derivative at exactly zero is zero.
    pub fn backward(self, z: &[f64], out: &[f64], grad_out: &[f64]) -> Vec<f64> {
        match self {
            Activation::Identity => grad_out.to_vec(),
            Activation::Relu => z
                .iter()
                .zip(grad_out)
                .map(|(&zv, &g)| if zv > 0.0 { g } else { 0.0 })
                .collect(),
            Activation::Sigmoid => out
                .iter()
                .zip(grad_out)
                .map(|(&a, &g)| g * a * (1.0 - a))
                .collect(),
            Activation::Tanh => out
                .iter()
                .zip(grad_out)
                .map(|(&a, &g)| g * (1.0 - a * a))
                .collect(),
            Activation::Softmax => {
                let dot: f64 = out.iter().zip(grad_out).map(|(a, g)| a * g).sum();
                out.iter()
                    .zip(grad_out)
                    .map(|(&a, &g)| a * (g - dot))
                    .collect()
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    Valid,
    /// Zero padding so that the output extent is `ceil(input / stride)`.
    Same,
}

/// Fully connected layer, `y = act(W x + b)` with `W` of shape `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

/// Direct 2-D convolution over `channels x height x width` inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2D {
    /// `out_channels x in_channels x kernel_h x kernel_w`
    pub filters: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: Padding,
    pub activation: Activation,
}

/// Affine map feeding one LSTM component from `[x_t ; a_{t-1}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    /// `hidden x (input + hidden)`
    pub weight: Tensor,
    pub bias: Tensor,
}

/// LSTM cell run over a `steps x input` sequence; the layer output is the
/// final hidden state.
///
/// Cell update: `p = tanh(z_signal) * sigm(z_input_gate)`,
/// `c_t = sigm(z_forget) * c_{t-1} + p`, `a_t = sigm(z_output) * tanh(c_t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub signal: Gate,
    pub input_gate: Gate,
    pub forget_gate: Gate,
    pub output_gate: Gate,
}

/// Graph convolution `act(L H W)` where `L` is the (normalized) graph
/// Laplacian supplied at evaluation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphConv {
    /// `in_features x out_features`
    pub weight: Tensor,
    pub activation: Activation,
}

/// Multi-head scaled dot-product attention with row-vector projections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    pub heads: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    /// `model x heads*key_dim`
    pub w_query: Tensor,
    /// `model x heads*key_dim`
    pub w_key: Tensor,
    /// `model x heads*value_dim`
    pub w_value: Tensor,
    /// `heads*value_dim x out`
    pub w_out: Tensor,
}

/// Token-id lookup, `steps` ids to `steps x dim` vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    /// `vocab x dim`
    pub table: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(Dense),
    Conv2D(Conv2D),
    MaxPool2D { window: usize },
    AvgPool2D { window: usize },
    /// Rank-1 input sums to a single value; higher ranks sum over axis 0.
    SumPool,
    Lstm(LstmCell),
    GraphConv(GraphConv),
    Attention(Attention),
    Embedding(Embedding),
    Flatten,
}

/// Values recorded during the forward pass that the backward pass needs.
#[derive(Clone, Debug)]
pub(crate) enum Cache {
    None,
    Pre(Vec<f64>),
    Argmax(Vec<usize>),
    Lstm(Vec<LstmStep>),
    Graph { aggregated: Vec<f64>, pre: Vec<f64> },
    Attention(AttentionCache),
}

#[derive(Clone, Debug)]
pub(crate) struct AttentionCache {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// one `nq x nk` weight matrix per head
    weights: Vec<Vec<f64>>,
    concat: Vec<f64>,
}

/// One evaluated LSTM time step, gate activations included.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmStep {
    /// `[x_t ; a_{t-1}]`
    pub joint_input: Vec<f64>,
    pub z_signal: Vec<f64>,
    pub z_input_gate: Vec<f64>,
    pub z_forget: Vec<f64>,
    pub z_output: Vec<f64>,
    pub signal: Vec<f64>,
    pub input_gate: Vec<f64>,
    pub forget: Vec<f64>,
    pub output: Vec<f64>,
    /// `signal * input_gate`
    pub product: Vec<f64>,
    pub cell_prev: Vec<f64>,
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

fn affine(weight: &Tensor, bias: &[f64], x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (weight.dims()[0], weight.dims()[1]);
    let w = weight.data();
    (0..rows)
        .map(|r| {
            let row = &w[r * cols..(r + 1) * cols];
            bias[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

impl LstmCell {
    pub fn hidden_size(&self) -> usize {
        self.signal.weight.dims()[0]
    }

    pub fn input_size(&self) -> usize {
        self.signal.weight.dims()[1] - self.hidden_size()
    }

    fn gates(&self) -> [&Gate; 4] {
        [
            &self.signal,
            &self.input_gate,
            &self.forget_gate,
            &self.output_gate,
        ]
    }

    fn check(&self) -> std::result::Result<(), String> {
        let h = self.signal.weight.dims().first().copied().unwrap_or(0);
        let cols = self.signal.weight.dims().get(1).copied().unwrap_or(0);
        if h == 0 || cols <= h {
            return Err(format!(
                "lstm weights must be hidden x (input + hidden), got {:?}",
                self.signal.weight.dims()
            ));
        }
        for (name, g) in ["signal", "input_gate", "forget_gate", "output_gate"]
            .iter()
            .zip(self.gates())
        {
            if g.weight.dims() != [h, cols] || g.bias.dims() != [h] {
                return Err(format!(
                    "lstm {name} gate has weight {:?} / bias {:?}, expected [{h}, {cols}] / [{h}]",
                    g.weight.dims(),
                    g.bias.dims()
                ));
            }
        }
        Ok(())
    }

    fn step_raw(&self, hidden_prev: &[f64], cell_prev: &[f64], x: &[f64]) -> LstmStep {
        let mut joint = x.to_vec();
        joint.extend_from_slice(hidden_prev);
        let z_signal = affine(&self.signal.weight, self.signal.bias.data(), &joint);
        let z_input_gate = affine(&self.input_gate.weight, self.input_gate.bias.data(), &joint);
        let z_forget = affine(&self.forget_gate.weight, self.forget_gate.bias.data(), &joint);
        let z_output = affine(&self.output_gate.weight, self.output_gate.bias.data(), &joint);
        let signal: Vec<f64> = z_signal.iter().map(|v| v.tanh()).collect();
        let input_gate: Vec<f64> = z_input_gate.iter().map(|&v| sigmoid(v)).collect();
        let forget: Vec<f64> = z_forget.iter().map(|&v| sigmoid(v)).collect();
        let output: Vec<f64> = z_output.iter().map(|&v| sigmoid(v)).collect();
        let product: Vec<f64> = signal.iter().zip(&input_gate).map(|(s, g)| s * g).collect();
        let cell: Vec<f64> = forget
            .iter()
            .zip(cell_prev)
            .zip(&product)
            .map(|((f, c), p)| f * c + p)
            .collect();
        let hidden = output.iter().zip(&cell).map(|(o, c)| o * c.tanh()).collect();
        LstmStep {
            joint_input: joint,
            z_signal,
            z_input_gate,
            z_forget,
            z_output,
            signal,
            input_gate,
            forget,
            output,
            product,
            cell_prev: cell_prev.to_vec(),
            cell,
            hidden,
        }
    }

    /// Runs the cell over every row of a `steps x input` sequence starting
    /// from zero state.
    pub fn run(&self, sequence: &Tensor) -> Result<Vec<LstmStep>> {
        self.check().map_err(Error::invalid)?;
        let d = self.input_size();
        if sequence.rank() != 2 || sequence.dims()[1] != d {
            return Err(Error::invalid(format!(
                "lstm expects steps x {d} input, got {:?}",
                sequence.dims()
            )));
        }
        let h = self.hidden_size();
        let mut hidden = vec![0.0; h];
        let mut cell = vec![0.0; h];
        let mut steps = Vec::with_capacity(sequence.rows());
        for t in 0..sequence.rows() {
            let step = self.step_raw(&hidden, &cell, sequence.row(t));
            hidden.clone_from(&step.hidden);
            cell.clone_from(&step.cell);
            steps.push(step);
        }
        Ok(steps)
    }
}

/// One LSTM step from explicit previous state. Returns the full step record
/// (hidden state, cell state and every gate activation).
pub fn lstm_step(cell: &LstmCell, a_prev: &Tensor, c_prev: &Tensor, x_t: &Tensor) -> Result<LstmStep> {
    cell.check().map_err(Error::invalid)?;
    let h = cell.hidden_size();
    if a_prev.len() != h || c_prev.len() != h || x_t.len() != cell.input_size() {
        return Err(Error::invalid(format!(
            "lstm_step: hidden/cell must have {h} entries and input {}, got {}/{}/{}",
            cell.input_size(),
            a_prev.len(),
            c_prev.len(),
            x_t.len()
        )));
    }
    Ok(cell.step_raw(a_prev.data(), c_prev.data(), x_t.data()))
}

/// `act(L H W)` for an `n x n` Laplacian and `n x d` node features.
pub fn graph_conv(layer: &GraphConv, laplacian: &Tensor, h_prev: &Tensor) -> Result<Tensor> {
    let (agg, pre) = graph_conv_raw(layer, laplacian, h_prev, 0)?;
    drop(agg);
    let out = layer.activation.apply(&pre);
    Ok(Tensor::from_parts(
        vec![h_prev.rows(), layer.weight.dims()[1]],
        out,
    ))
}

fn graph_conv_raw(
    layer: &GraphConv,
    laplacian: &Tensor,
    h_prev: &Tensor,
    index: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if laplacian.rank() != 2 || laplacian.dims()[0] != laplacian.dims()[1] {
        return Err(Error::shape(
            index,
            format!("laplacian must be square, got {:?}", laplacian.dims()),
        ));
    }
    let n = laplacian.dims()[0];
    let (din, dout) = (layer.weight.dims()[0], layer.weight.dims()[1]);
    if h_prev.rank() != 2 || h_prev.dims() != [n, din] {
        return Err(Error::shape(
            index,
            format!(
                "graph conv expects {n} x {din} node features, got {:?}",
                h_prev.dims()
            ),
        ));
    }
    if layer.activation == Activation::Softmax {
        return Err(Error::shape(index, "softmax is only valid on dense layers"));
    }
    let agg = matmul(laplacian.data(), h_prev.data(), n, n, din);
    let pre = matmul(&agg, layer.weight.data(), n, din, dout);
    Ok((agg, pre))
}

/// Multi-head attention of `queries` (`nq x model`) against `keys` and
/// `values` (`nk x model`). Output is `nq x out`.
pub fn attention(layer: &Attention, queries: &Tensor, keys: &Tensor, values: &Tensor) -> Result<Tensor> {
    let (out, _) = attention_raw(layer, queries, keys, values, 0)?;
    Ok(out)
}

impl Attention {
    fn model_dim(&self) -> usize {
        self.w_query.dims()[0]
    }

    fn out_dim(&self) -> usize {
        self.w_out.dims()[1]
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.key_dim == 0 {
            return Err("attention key dimension must be positive".into());
        }
        if self.heads == 0 || self.value_dim == 0 {
            return Err("attention needs at least one head and a positive value dimension".into());
        }
        let dm = self.w_query.dims().first().copied().unwrap_or(0);
        let hk = self.heads * self.key_dim;
        let hv = self.heads * self.value_dim;
        if self.w_query.dims() != [dm, hk] || self.w_key.dims() != [dm, hk] {
            return Err(format!(
                "query/key projections must be {dm} x {hk}, got {:?} / {:?}",
                self.w_query.dims(),
                self.w_key.dims()
            ));
        }
        if self.w_value.dims() != [dm, hv] {
            return Err(format!(
                "value projection must be {dm} x {hv}, got {:?}",
                self.w_value.dims()
            ));
        }
        if self.w_out.rank() != 2 || self.w_out.dims()[0] != hv {
            return Err(format!(
                "output projection must have {hv} rows, got {:?}",
                self.w_out.dims()
            ));
        }
        Ok(())
    }
}

fn attention_raw(
    layer: &Attention,
    queries: &Tensor,
    keys: &Tensor,
    values: &Tensor,
    index: usize,
) -> Result<(Tensor, AttentionCache)> {
    layer.check().map_err(|m| Error::shape(index, m))?;
    let dm = layer.model_dim();
    for (name, t) in [("queries", queries), ("keys", keys), ("values", values)] {
        if t.rank() != 2 || t.dims()[1] != dm {
            return Err(Error::shape(
                index,
                format!("attention {name} must be n x {dm}, got {:?}", t.dims()),
            ));
        }
    }
    if keys.rows() != values.rows() {
        return Err(Error::shape(index, "keys and values need the same row count"));
    }
    let (nq, nk) = (queries.rows(), keys.rows());
    let (h, dk, dv) = (layer.heads, layer.key_dim, layer.value_dim);
    let q = matmul(queries.data(), layer.w_query.data(), nq, dm, h * dk);
    let k = matmul(keys.data(), layer.w_key.data(), nk, dm, h * dk);
    let v = matmul(values.data(), layer.w_value.data(), nk, dm, h * dv);
    let scale = 1.0 / (dk as f64).sqrt();
    let mut weights = Vec::with_capacity(h);
    let mut concat = vec![0.0; nq * h * dv];
    for head in 0..h {
        let mut w = vec![0.0; nq * nk];
        for i in 0..nq {
            let scores: Vec<f64> = (0..nk)
                .map(|j| {
                    (0..dk)
                        .map(|c| q[i * h * dk + head * dk + c] * k[j * h * dk + head * dk + c])
                        .sum::<f64>()
                        * scale
                })
                .collect();
            let probs = softmax(&scores);
            w[i * nk..(i + 1) * nk].copy_from_slice(&probs);
            for c in 0..dv {
                concat[i * h * dv + head * dv + c] = (0..nk)
                    .map(|j| probs[j] * v[j * h * dv + head * dv + c])
                    .sum();
            }
        }
        weights.push(w);
    }
    let dout = layer.out_dim();
    let out = matmul(&concat, layer.w_out.data(), nq, h * dv, dout);
    Ok((
        Tensor::from_parts(vec![nq, dout], out),
        AttentionCache {
            q,
            k,
            v,
            weights,
            concat,
        },
    ))
}

fn match_dims(index: usize, what: &str, got: &[usize], want: &[usize]) -> Result<()> {
    let ok = got.len() == want.len() && got.iter().zip(want).all(|(&g, &w)| w == 0 || g == w);
    if ok {
        Ok(())
    } else {
        Err(Error::shape(
            index,
            format!("{what} expects input {want:?} (0 = any), got {got:?}"),
        ))
    }
}

fn same_out(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

impl Conv2D {
    /// `(out_h, out_w, pad_top, pad_left)` for an `h x w` input.
    fn geometry(&self, h: usize, w: usize) -> std::result::Result<(usize, usize, usize, usize), String> {
        let (kh, kw) = (self.filters.dims()[2], self.filters.dims()[3]);
        if self.stride == 0 {
            return Err("conv stride must be positive".into());
        }
        match self.padding {
            Padding::Valid => {
                if h < kh || w < kw {
                    return Err(format!("input {h}x{w} smaller than kernel {kh}x{kw}"));
                }
                Ok(((h - kh) / self.stride + 1, (w - kw) / self.stride + 1, 0, 0))
            }
            Padding::Same => {
                let (oh, pt) = same_out(h, kh, self.stride);
                let (ow, pl) = same_out(w, kw, self.stride);
                Ok((oh, ow, pt, pl))
            }
        }
    }

    /// Calls `f(out_flat, in_flat, weight_flat)` for every multiply in the
    /// convolution. Zero-padding positions are skipped.
    pub(crate) fn for_each_connection(&self, in_dims: &[usize], mut f: impl FnMut(usize, usize, usize)) {
        let (co, ci, kh, kw) = (
            self.filters.dims()[0],
            self.filters.dims()[1],
            self.filters.dims()[2],
            self.filters.dims()[3],
        );
        let (h, w) = (in_dims[1], in_dims[2]);
        let (oh, ow, pt, pl) = self.geometry(h, w).expect("validated geometry");
        for o in 0..co {
            for y in 0..oh {
                for x in 0..ow {
                    let out_ix = (o * oh + y) * ow + x;
                    for c in 0..ci {
                        for i in 0..kh {
                            let iy = (y * self.stride + i) as isize - pt as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for j in 0..kw {
                                let ix = (x * self.stride + j) as isize - pl as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let in_ix = (c * h + iy as usize) * w + ix as usize;
                                let w_ix = ((o * ci + c) * kh + i) * kw + j;
                                f(out_ix, in_ix, w_ix);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn pool_windows(dims: &[usize], window: usize) -> (usize, usize, usize) {
    (dims[0], dims[1] / window, dims[2] / window)
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2D(_) => "conv2d",
            Layer::MaxPool2D { .. } => "maxpool2d",
            Layer::AvgPool2D { .. } => "avgpool2d",
            Layer::SumPool => "sumpool",
            Layer::Lstm(_) => "lstm",
            Layer::GraphConv(_) => "graphconv",
            Layer::Attention(_) => "attention",
            Layer::Embedding(_) => "embedding",
            Layer::Flatten => "flatten",
        }
    }

    /// Trainable tensors in a fixed order.
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Conv2D(c) => vec![&c.filters, &c.bias],
            Layer::Lstm(l) => l
                .gates()
                .into_iter()
                .flat_map(|g| [&g.weight, &g.bias])
                .collect(),
            Layer::GraphConv(g) => vec![&g.weight],
            Layer::Attention(a) => vec![&a.w_query, &a.w_key, &a.w_value, &a.w_out],
            Layer::Embedding(e) => vec![&e.table],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Conv2D(c) => vec![&mut c.filters, &mut c.bias],
            Layer::Lstm(l) => {
                let LstmCell {
                    signal,
                    input_gate,
                    forget_gate,
                    output_gate,
                } = l;
                vec![
                    &mut signal.weight,
                    &mut signal.bias,
                    &mut input_gate.weight,
                    &mut input_gate.bias,
                    &mut forget_gate.weight,
                    &mut forget_gate.bias,
                    &mut output_gate.weight,
                    &mut output_gate.bias,
                ]
            }
            Layer::GraphConv(g) => vec![&mut g.weight],
            Layer::Attention(a) => vec![&mut a.w_query, &mut a.w_key, &mut a.w_value, &mut a.w_out],
            Layer::Embedding(e) => vec![&mut e.table],
            _ => vec![],
        }
    }

    /// Output extents for the given input extents; `0` marks a free axis
    /// (sequence length, node count).
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let err = |m: String| Error::shape(index, m);
        match self {
            Layer::Dense(d) => {
                if d.weight.rank() != 2 || d.bias.dims() != [d.weight.dims()[0]] {
                    return Err(err(format!(
                        "dense weight {:?} and bias {:?} are inconsistent",
                        d.weight.dims(),
                        d.bias.dims()
                    )));
                }
                match_dims(index, "dense", input, &[d.weight.dims()[1]])?;
                Ok(vec![d.weight.dims()[0]])
            }
            Layer::Conv2D(c) => {
                if c.filters.rank() != 4 || c.bias.dims() != [c.filters.dims()[0]] {
                    return Err(err(format!(
                        "conv filters {:?} and bias {:?} are inconsistent",
                        c.filters.dims(),
                        c.bias.dims()
                    )));
                }
                if c.activation == Activation::Softmax {
                    return Err(err("softmax is only valid on dense layers".into()));
                }
                match_dims(index, "conv2d", input, &[c.filters.dims()[1], 0, 0])?;
                if input[1] == 0 || input[2] == 0 {
                    return Err(err("conv2d needs static spatial extents".into()));
                }
                let (oh, ow, _, _) = c.geometry(input[1], input[2]).map_err(err)?;
                Ok(vec![c.filters.dims()[0], oh, ow])
            }
            Layer::MaxPool2D { window } | Layer::AvgPool2D { window } => {
                match_dims(index, self.kind_name(), input, &[0, 0, 0])?;
                if *window == 0 || input[1] < *window || input[2] < *window {
                    return Err(err(format!(
                        "pool window {window} does not fit input {input:?}"
                    )));
                }
                let (c, oh, ow) = pool_windows(input, *window);
                Ok(vec![c, oh, ow])
            }
            Layer::SumPool => match input.len() {
                0 => Err(err("sum pool of a scalar".into())),
                1 => Ok(vec![1]),
                _ => Ok(input[1..].to_vec()),
            },
            Layer::Flatten => {
                if input.contains(&0) {
                    return Err(err("cannot flatten a free-length axis".into()));
                }
                Ok(vec![input.iter().product()])
            }
            Layer::Lstm(l) => {
                l.check().map_err(err)?;
                match_dims(index, "lstm", input, &[0, l.input_size()])?;
                Ok(vec![l.hidden_size()])
            }
            Layer::GraphConv(g) => {
                if g.weight.rank() != 2 {
                    return Err(err("graph conv weight must be a matrix".into()));
                }
                if g.activation == Activation::Softmax {
                    return Err(err("softmax is only valid on dense layers".into()));
                }
                match_dims(index, "graphconv", input, &[0, g.weight.dims()[0]])?;
                Ok(vec![input[0], g.weight.dims()[1]])
            }
            Layer::Attention(a) => {
                a.check().map_err(err)?;
                match_dims(index, "attention", input, &[0, a.model_dim()])?;
                Ok(vec![input[0], a.out_dim()])
            }
            Layer::Embedding(e) => {
                if e.table.rank() != 2 {
                    return Err(err("embedding table must be a matrix".into()));
                }
                match_dims(index, "embedding", input, &[0])?;
                Ok(vec![input[0], e.table.dims()[1]])
            }
        }
    }

    pub(crate) fn forward(
        &self,
        index: usize,
        x: &Tensor,
        laplacian: Option<&Tensor>,
    ) -> Result<(Tensor, Cache)> {
        let out_dims = self.output_shape(index, x.dims())?;
        let (data, cache) = match self {
            Layer::Dense(d) => {
                let pre = affine(&d.weight, d.bias.data(), x.data());
                (d.activation.apply(&pre), Cache::Pre(pre))
            }
            Layer::Conv2D(c) => {
                let (co, oh, ow) = (out_dims[0], out_dims[1], out_dims[2]);
                let mut pre = vec![0.0; co * oh * ow];
                for (o, p) in pre.chunks_mut(oh * ow).enumerate() {
                    p.iter_mut().for_each(|v| *v = c.bias.data()[o]);
                }
                let (xs, fs) = (x.data(), c.filters.data());
                c.for_each_connection(x.dims(), |o, i, w| pre[o] += fs[w] * xs[i]);
                (c.activation.apply(&pre), Cache::Pre(pre))
            }
            Layer::MaxPool2D { window } | Layer::AvgPool2D { window } => {
                let is_max = matches!(self, Layer::MaxPool2D { .. });
                let (c, oh, ow) = pool_windows(x.dims(), *window);
                let (h, w) = (x.dims()[1], x.dims()[2]);
                let mut out = Vec::with_capacity(c * oh * ow);
                let mut argmax = Vec::new();
                for ch in 0..c {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let mut best_ix = usize::MAX;
                            let mut acc = 0.0;
                            for i in 0..*window {
                                for j in 0..*window {
                                    let ix = (ch * h + y * window + i) * w + xx * window + j;
                                    let v = x.data()[ix];
                                    if is_max {
                                        if best_ix == usize::MAX || v > x.data()[best_ix] {
                                            best_ix = ix;
                                        }
                                    } else {
                                        acc += v;
                                    }
                                }
                            }
                            if is_max {
                                out.push(x.data()[best_ix]);
                                argmax.push(best_ix);
                            } else {
                                out.push(acc / (*window * *window) as f64);
                            }
                        }
                    }
                }
                let cache = if is_max { Cache::Argmax(argmax) } else { Cache::None };
                (out, cache)
            }
            Layer::SumPool => {
                if x.rank() == 1 {
                    (vec![x.sum()], Cache::None)
                } else {
                    let inner: usize = x.dims()[1..].iter().product();
                    let mut out = vec![0.0; inner];
                    for chunk in x.data().chunks(inner) {
                        for (o, v) in out.iter_mut().zip(chunk) {
                            *o += v;
                        }
                    }
                    (out, Cache::None)
                }
            }
            Layer::Flatten => (x.data().to_vec(), Cache::None),
            Layer::Lstm(l) => {
                let steps = l.run(x).map_err(|e| Error::shape(index, e.to_string()))?;
                let out = steps
                    .last()
                    .map(|s| s.hidden.clone())
                    .unwrap_or_else(|| vec![0.0; l.hidden_size()]);
                (out, Cache::Lstm(steps))
            }
            Layer::GraphConv(g) => {
                let lap = laplacian.ok_or_else(|| {
                    Error::shape(index, "graph convolution needs a laplacian; use forward_graph")
                })?;
                let (agg, pre) = graph_conv_raw(g, lap, x, index)?;
                (
                    g.activation.apply(&pre),
                    Cache::Graph {
                        aggregated: agg,
                        pre,
                    },
                )
            }
            Layer::Attention(a) => {
                let (out, cache) = attention_raw(a, x, x, x, index)?;
                (out.into_data(), Cache::Attention(cache))
            }
            Layer::Embedding(e) => {
                let (vocab, dim) = (e.table.dims()[0], e.table.dims()[1]);
                let mut out = Vec::with_capacity(x.len() * dim);
                for (t, &id) in x.data().iter().enumerate() {
                    if id < 0.0 || id.fract() != 0.0 || id as usize >= vocab {
                        return Err(Error::shape(
                            index,
                            format!("token {t} has id {id}, expected an integer in 0..{vocab}"),
                        ));
                    }
                    out.extend_from_slice(e.table.row(id as usize));
                }
                (out, Cache::None)
            }
        };
        let out = Tensor::new(out_dims, data).map_err(|e| Error::shape(index, e.to_string()))?;
        Ok((out, cache))
    }

    /// Reverse pass of one layer. Returns the gradient w.r.t. the layer input
    /// and, when `with_params`, gradients for each of [`Layer::params`].
    pub(crate) fn backward(
        &self,
        x: &Tensor,
        y: &Tensor,
        cache: &Cache,
        grad_out: &Tensor,
        laplacian: Option<&Tensor>,
        with_params: bool,
    ) -> (Tensor, Vec<Tensor>) {
        let g = grad_out.data();
        match (self, cache) {
            (Layer::Dense(d), Cache::Pre(pre)) => {
                let gz = d.activation.backward(pre, y.data(), g);
                let (rows, cols) = (d.weight.dims()[0], d.weight.dims()[1]);
                let mut gx = vec![0.0; cols];
                let w = d.weight.data();
                for r in 0..rows {
                    for c in 0..cols {
                        gx[c] += w[r * cols + c] * gz[r];
                    }
                }
                let params = if with_params {
                    let mut gw = vec![0.0; rows * cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            gw[r * cols + c] = gz[r] * x.data()[c];
                        }
                    }
                    vec![
                        Tensor::from_parts(vec![rows, cols], gw),
                        Tensor::from_parts(vec![rows], gz),
                    ]
                } else {
                    vec![]
                };
                (Tensor::from_parts(x.dims().to_vec(), gx), params)
            }
            (Layer::Conv2D(c), Cache::Pre(pre)) => {
                let gz = c.activation.backward(pre, y.data(), g);
                let mut gx = vec![0.0; x.len()];
                let mut gw = vec![0.0; c.filters.len()];
                let fs = c.filters.data();
                let xs = x.data();
                c.for_each_connection(x.dims(), |o, i, w| {
                    gx[i] += fs[w] * gz[o];
                    if with_params {
                        gw[w] += xs[i] * gz[o];
                    }
                });
                let params = if with_params {
                    let co = c.filters.dims()[0];
                    let per = gz.len() / co;
                    let gb: Vec<f64> = gz.chunks(per).map(|ch| ch.iter().sum()).collect();
                    vec![
                        Tensor::from_parts(c.filters.dims().to_vec(), gw),
                        Tensor::from_parts(vec![co], gb),
                    ]
                } else {
                    vec![]
                };
                (Tensor::from_parts(x.dims().to_vec(), gx), params)
            }
            (Layer::MaxPool2D { .. }, Cache::Argmax(argmax)) => {
                let mut gx = vec![0.0; x.len()];
                for (&ix, &gv) in argmax.iter().zip(g) {
                    gx[ix] += gv;
                }
                (Tensor::from_parts(x.dims().to_vec(), gx), vec![])
            }
            (Layer::AvgPool2D { window }, _) => {
                let (c, oh, ow) = pool_windows(x.dims(), *window);
                let (h, w) = (x.dims()[1], x.dims()[2]);
                let share = 1.0 / (*window * *window) as f64;
                let mut gx = vec![0.0; x.len()];
                for ch in 0..c {
                    for yy in 0..oh {
                        for xx in 0..ow {
                            let gv = g[(ch * oh + yy) * ow + xx] * share;
                            for i in 0..*window {
                                for j in 0..*window {
                                    gx[(ch * h + yy * window + i) * w + xx * window + j] += gv;
                                }
                            }
                        }
                    }
                }
                (Tensor::from_parts(x.dims().to_vec(), gx), vec![])
            }
            (Layer::SumPool, _) => {
                let gx = if x.rank() == 1 {
                    vec![g[0]; x.len()]
                } else {
                    let inner = g.len();
                    (0..x.len()).map(|i| g[i % inner]).collect()
                };
                (Tensor::from_parts(x.dims().to_vec(), gx), vec![])
            }
            (Layer::Flatten, _) => (Tensor::from_parts(x.dims().to_vec(), g.to_vec()), vec![]),
            (Layer::Lstm(l), Cache::Lstm(steps)) => lstm_backward(l, x, steps, g, with_params),
            (Layer::GraphConv(gc), Cache::Graph { aggregated, pre }) => {
                let lap = laplacian.expect("laplacian present in forward");
                let n = x.rows();
                let (din, dout) = (gc.weight.dims()[0], gc.weight.dims()[1]);
                let gz = gc.activation.backward(pre, y.data(), g);
                let wt = transpose(gc.weight.data(), din, dout);
                let g_agg = matmul(&gz, &wt, n, dout, din);
                let lt = transpose(lap.data(), n, n);
                let gx = matmul(&lt, &g_agg, n, n, din);
                let params = if with_params {
                    let at = transpose(aggregated, n, din);
                    vec![Tensor::from_parts(
                        vec![din, dout],
                        matmul(&at, &gz, din, n, dout),
                    )]
                } else {
                    vec![]
                };
                (Tensor::from_parts(x.dims().to_vec(), gx), params)
            }
            (Layer::Attention(a), Cache::Attention(c)) => attention_backward(a, x, c, g, with_params),
            (Layer::Embedding(e), _) => {
                let params = if with_params {
                    let dim = e.table.dims()[1];
                    let mut gt = vec![0.0; e.table.len()];
                    for (t, &id) in x.data().iter().enumerate() {
                        let id = id as usize;
                        for c in 0..dim {
                            gt[id * dim + c] += g[t * dim + c];
                        }
                    }
                    vec![Tensor::from_parts(e.table.dims().to_vec(), gt)]
                } else {
                    vec![]
                };
                // token ids carry no gradient
                (Tensor::zeros(x.dims()), params)
            }
            _ => unreachable!("layer/cache mismatch"),
        }
    }
}

fn lstm_backward(
    l: &LstmCell,
    x: &Tensor,
    steps: &[LstmStep],
    g: &[f64],
    with_params: bool,
) -> (Tensor, Vec<Tensor>) {
    let h = l.hidden_size();
    let d = l.input_size();
    let cols = d + h;
    let mut gx = vec![0.0; x.len()];
    let mut gw: Vec<Vec<f64>> = vec![vec![0.0; h * cols]; 4];
    let mut gb: Vec<Vec<f64>> = vec![vec![0.0; h]; 4];
    let mut dh = g.to_vec();
    let mut dc = vec![0.0; h];
    for (t, s) in steps.iter().enumerate().rev() {
        let mut dz = vec![vec![0.0; h]; 4];
        for u in 0..h {
            let tc = s.cell[u].tanh();
            let d_out = dh[u] * tc;
            dc[u] += dh[u] * s.output[u] * (1.0 - tc * tc);
            let d_forget = dc[u] * s.cell_prev[u];
            let d_signal = dc[u] * s.input_gate[u];
            let d_in = dc[u] * s.signal[u];
            dz[0][u] = d_signal * (1.0 - s.signal[u] * s.signal[u]);
            dz[1][u] = d_in * s.input_gate[u] * (1.0 - s.input_gate[u]);
            dz[2][u] = d_forget * s.forget[u] * (1.0 - s.forget[u]);
            dz[3][u] = d_out * s.output[u] * (1.0 - s.output[u]);
            dc[u] *= s.forget[u];
        }
        let mut d_joint = vec![0.0; cols];
        for (k, gate) in l.gates().iter().enumerate() {
            let w = gate.weight.data();
            for u in 0..h {
                let dzu = dz[k][u];
                if dzu == 0.0 {
                    continue;
                }
                for c in 0..cols {
                    d_joint[c] += w[u * cols + c] * dzu;
                    if with_params {
                        gw[k][u * cols + c] += dzu * s.joint_input[c];
                    }
                }
                if with_params {
                    gb[k][u] += dzu;
                }
            }
        }
        gx[t * d..(t + 1) * d].copy_from_slice(&d_joint[..d]);
        dh = d_joint[d..].to_vec();
    }
    let params = if with_params {
        gw.into_iter()
            .zip(gb)
            .flat_map(|(w, b)| {
                [
                    Tensor::from_parts(vec![h, cols], w),
                    Tensor::from_parts(vec![h], b),
                ]
            })
            .collect()
    } else {
        vec![]
    };
    (Tensor::from_parts(x.dims().to_vec(), gx), params)
}

fn attention_backward(
    a: &Attention,
    x: &Tensor,
    c: &AttentionCache,
    g: &[f64],
    with_params: bool,
) -> (Tensor, Vec<Tensor>) {
    let n = x.rows();
    let dm = a.model_dim();
    let (h, dk, dv) = (a.heads, a.key_dim, a.value_dim);
    let dout = a.out_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    // out = concat * w_out
    let wo_t = transpose(a.w_out.data(), h * dv, dout);
    let g_concat = matmul(g, &wo_t, n, dout, h * dv);
    let mut gq = vec![0.0; n * h * dk];
    let mut gk = vec![0.0; n * h * dk];
    let mut gv = vec![0.0; n * h * dv];
    for head in 0..h {
        let w = &c.weights[head];
        for i in 0..n {
            // dA[i, j] = sum_c gH[i, c] * V[j, c]
            let g_attn: Vec<f64> = (0..n)
                .map(|j| {
                    (0..dv)
                        .map(|cc| g_concat[i * h * dv + head * dv + cc] * c.v[j * h * dv + head * dv + cc])
                        .sum()
                })
                .collect();
            let row = &w[i * n..(i + 1) * n];
            let dot: f64 = row.iter().zip(&g_attn).map(|(p, gg)| p * gg).sum();
            for j in 0..n {
                let gs = row[j] * (g_attn[j] - dot) * scale;
                for cc in 0..dk {
                    gq[i * h * dk + head * dk + cc] += gs * c.k[j * h * dk + head * dk + cc];
                    gk[j * h * dk + head * dk + cc] += gs * c.q[i * h * dk + head * dk + cc];
                }
                for cc in 0..dv {
                    gv[j * h * dv + head * dv + cc] += row[j] * g_concat[i * h * dv + head * dv + cc];
                }
            }
        }
    }
    let mut gx = matmul(&gq, &transpose(a.w_query.data(), dm, h * dk), n, h * dk, dm);
    let from_k = matmul(&gk, &transpose(a.w_key.data(), dm, h * dk), n, h * dk, dm);
    let from_v = matmul(&gv, &transpose(a.w_value.data(), dm, h * dv), n, h * dv, dm);
    for ((o, b), cc) in gx.iter_mut().zip(&from_k).zip(&from_v) {
        *o += b + cc;
    }
    let params = if with_params {
        let xt = transpose(x.data(), n, dm);
        let ct = transpose(&c.concat, n, h * dv);
        vec![
            Tensor::from_parts(vec![dm, h * dk], matmul(&xt, &gq, dm, n, h * dk)),
            Tensor::from_parts(vec![dm, h * dk], matmul(&xt, &gk, dm, n, h * dk)),
            Tensor::from_parts(vec![dm, h * dv], matmul(&xt, &gv, dm, n, h * dv)),
            Tensor::from_parts(vec![h * dv, dout], matmul(&ct, g, h * dv, n, dout)),
        ]
    } else {
        vec![]
    };
    (Tensor::from_parts(x.dims().to_vec(), gx), params)
}
