//! Plain-text model files.
//!
//! ```text
//! xattr-model 1
//! [meta]
//! layers = 2
//! input_shape = 4
//! features = delay,age,amount,employed
//! [layer 0]
//! kind = dense
//! activation = relu
//! weight.dims = 8 4
//! weight = 1.0000000000000000e0 ...
//! ```
//!
//! Every float is written with 17 significant digits so a load after a save
//! reproduces each parameter bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layer::{Activation, Attention, Conv2D, Dense, Embedding, Gate, GraphConv, Layer, LstmCell, Padding};
use crate::network::{Meta, Network};
use crate::tensor::Tensor;

const MAGIC: &str = "xattr-model";
const VERSION: u32 = 1;
const LSTM_GATES: [&str; 4] = ["signal", "input_gate", "forget_gate", "output_gate"];

fn fmt_floats(out: &mut String, data: &[f64]) {
    for (i, v) in data.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:.16e}").unwrap();
    }
}

fn fmt_usizes(v: &[usize]) -> String {
    v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ")
}

fn put_tensor(out: &mut String, name: &str, t: &Tensor) {
    writeln!(out, "{name}.dims = {}", fmt_usizes(t.dims())).unwrap();
    write!(out, "{name} = ").unwrap();
    fmt_floats(out, t.data());
    out.push('\n');
}

fn check_names(kind: &str, names: &[String]) -> Result<()> {
    for n in names {
        if n.is_empty() || n.contains(',') || n.contains('\n') || n.trim() != n {
            return Err(Error::invalid(format!(
                "{kind} name {n:?} cannot be stored (empty, comma, newline or padding)"
            )));
        }
    }
    Ok(())
}

pub fn model_to_string(net: &Network) -> Result<String> {
    check_names("feature", &net.meta.feature_names)?;
    check_names("class", &net.meta.class_names)?;
    let mut out = String::new();
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    out.push_str("[meta]\n");
    writeln!(out, "layers = {}", net.layers().len()).unwrap();
    writeln!(out, "input_shape = {}", fmt_usizes(net.input_shape())).unwrap();
    if !net.meta.feature_names.is_empty() {
        writeln!(out, "features = {}", net.meta.feature_names.join(",")).unwrap();
    }
    if !net.meta.class_names.is_empty() {
        writeln!(out, "classes = {}", net.meta.class_names.join(",")).unwrap();
    }
    if let Some(i) = net.last_conv_index() {
        writeln!(out, "last_conv = {i}").unwrap();
    }
    for (i, layer) in net.layers().iter().enumerate() {
        writeln!(out, "[layer {i}]").unwrap();
        writeln!(out, "kind = {}", layer.kind_name()).unwrap();
        match layer {
            Layer::Dense(d) => {
                writeln!(out, "activation = {}", d.activation.name()).unwrap();
                put_tensor(&mut out, "weight", &d.weight);
                put_tensor(&mut out, "bias", &d.bias);
            }
            Layer::Conv2D(c) => {
                writeln!(out, "activation = {}", c.activation.name()).unwrap();
                writeln!(out, "stride = {}", c.stride).unwrap();
                let pad = match c.padding {
                    Padding::Valid => "valid",
                    Padding::Same => "same",
                };
                writeln!(out, "padding = {pad}").unwrap();
                put_tensor(&mut out, "filters", &c.filters);
                put_tensor(&mut out, "bias", &c.bias);
            }
            Layer::MaxPool2D { window } | Layer::AvgPool2D { window } => {
                writeln!(out, "window = {window}").unwrap();
            }
            Layer::SumPool | Layer::Flatten => {}
            Layer::Lstm(l) => {
                for (name, g) in LSTM_GATES.iter().zip([&l.signal, &l.input_gate, &l.forget_gate, &l.output_gate]) {
                    put_tensor(&mut out, &format!("{name}.weight"), &g.weight);
                    put_tensor(&mut out, &format!("{name}.bias"), &g.bias);
                }
            }
            Layer::GraphConv(g) => {
                writeln!(out, "activation = {}", g.activation.name()).unwrap();
                put_tensor(&mut out, "weight", &g.weight);
            }
            Layer::Attention(a) => {
                writeln!(out, "heads = {}", a.heads).unwrap();
                writeln!(out, "key_dim = {}", a.key_dim).unwrap();
                writeln!(out, "value_dim = {}", a.value_dim).unwrap();
                put_tensor(&mut out, "w_query", &a.w_query);
                put_tensor(&mut out, "w_key", &a.w_key);
                put_tensor(&mut out, "w_value", &a.w_value);
                put_tensor(&mut out, "w_out", &a.w_out);
            }
            Layer::Embedding(e) => put_tensor(&mut out, "table", &e.table),
        }
    }
    Ok(out)
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_string(net)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    parse_model(&std::fs::read_to_string(path)?)
}

/// `key -> (line, column of value, value)` for one section.
struct Section {
    name: String,
    line: usize,
    fields: BTreeMap<String, (usize, usize, String)>,
}

impl Section {
    fn get(&self, key: &str) -> Result<&(usize, usize, String)> {
        self.fields.get(key).ok_or_else(|| {
            Error::parse(
                self.line,
                1,
                format!("section [{}] is missing field `{key}`", self.name),
            )
        })
    }

    fn usize(&self, key: &str) -> Result<usize> {
        let (line, col, v) = self.get(key)?;
        v.parse()
            .map_err(|_| Error::parse(*line, *col, format!("`{key}` must be a non-negative integer, got {v:?}")))
    }

    fn usizes(&self, key: &str) -> Result<Vec<usize>> {
        let (line, col, v) = self.get(key)?;
        v.split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::parse(*line, *col, format!("`{key}` has non-integer entry {t:?}")))
            })
            .collect()
    }

    fn activation(&self) -> Result<Activation> {
        let (line, col, v) = self.get("activation")?;
        Activation::from_name(v).ok_or_else(|| Error::parse(*line, *col, format!("unknown activation {v:?}")))
    }

    fn tensor(&self, name: &str) -> Result<Tensor> {
        let dims = self.usizes(&format!("{name}.dims"))?;
        let (line, col, v) = self.get(name)?;
        let data: Vec<f64> = v
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(*line, *col, format!("`{name}` has non-numeric entry {t:?}")))
            })
            .collect::<Result<_>>()?;
        Tensor::new(dims.clone(), data).map_err(|e| Error::parse(*line, *col, format!("`{name}`: {e}")))
    }
}

pub fn parse_model(text: &str) -> Result<Network> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| Error::parse(1, 1, "empty model file"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(Error::parse(1, 1, format!("expected `{MAGIC} {VERSION}` header")));
    }
    match parts.next().and_then(|v| v.parse::<u32>().ok()) {
        Some(VERSION) => {}
        Some(v) => {
            return Err(Error::parse(1, MAGIC.len() + 2, format!("unsupported model version {v} (expected {VERSION})")))
        }
        None => return Err(Error::parse(1, MAGIC.len() + 2, "missing model version")),
    }

    let mut sections: Vec<Section> = Vec::new();
    for (no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(no, raw.len(), "unterminated section header"))?;
            sections.push(Section {
                name: name.trim().to_string(),
                line: no,
                fields: BTreeMap::new(),
            });
            continue;
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| Error::parse(no, 1, "field outside of any section"))?;
        let eq = raw
            .find('=')
            .ok_or_else(|| Error::parse(no, 1, "expected `key = value`"))?;
        let key = raw[..eq].trim().to_string();
        let value = raw[eq + 1..].trim().to_string();
        let col = eq + 2 + (raw[eq + 1..].len() - raw[eq + 1..].trim_start().len());
        if section.fields.insert(key.clone(), (no, col, value)).is_some() {
            return Err(Error::parse(no, 1, format!("duplicate field `{key}`")));
        }
    }

    let last_line = text.lines().count().max(1);
    let meta = sections
        .iter()
        .find(|s| s.name == "meta")
        .ok_or_else(|| Error::parse(last_line, 1, "missing section [meta]"))?;
    let n_layers = meta.usize("layers")?;
    let input_shape = meta.usizes("input_shape")?;
    let split = |key: &str| -> Vec<String> {
        meta.fields
            .get(key)
            .map(|(_, _, v)| v.split(',').map(|s| s.trim().to_string()).collect())
            .unwrap_or_default()
    };
    let names = Meta {
        feature_names: split("features"),
        class_names: split("classes"),
    };

    let mut layers = Vec::with_capacity(n_layers);
    for k in 0..n_layers {
        let want = format!("layer {k}");
        let s = sections
            .iter()
            .find(|s| s.name == want)
            .ok_or_else(|| Error::parse(last_line, 1, format!("missing section [{want}]")))?;
        layers.push(parse_layer(s)?);
    }
    if let Some(extra) = sections
        .iter()
        .find(|s| s.name != "meta" && !(0..n_layers).any(|k| s.name == format!("layer {k}")))
    {
        return Err(Error::parse(extra.line, 1, format!("unexpected section [{}]", extra.name)));
    }

    let mut net = Network::new(input_shape, layers)?.with_meta(names);
    if meta.fields.contains_key("last_conv") {
        net.set_last_conv(Some(meta.usize("last_conv")?))?;
    }
    Ok(net)
}

fn parse_layer(s: &Section) -> Result<Layer> {
    let (line, col, kind) = s.get("kind")?;
    Ok(match kind.as_str() {
        "dense" => Layer::Dense(Dense {
            weight: s.tensor("weight")?,
            bias: s.tensor("bias")?,
            activation: s.activation()?,
        }),
        "conv2d" => {
            let (pl, pc, pad) = s.get("padding")?;
            let padding = match pad.as_str() {
                "valid" => Padding::Valid,
                "same" => Padding::Same,
                other => return Err(Error::parse(*pl, *pc, format!("unknown padding {other:?}"))),
            };
            Layer::Conv2D(Conv2D {
                filters: s.tensor("filters")?,
                bias: s.tensor("bias")?,
                stride: s.usize("stride")?,
                padding,
                activation: s.activation()?,
            })
        }
        "maxpool2d" => Layer::MaxPool2D { window: s.usize("window")? },
        "avgpool2d" => Layer::AvgPool2D { window: s.usize("window")? },
        "sumpool" => Layer::SumPool,
        "flatten" => Layer::Flatten,
        "lstm" => {
            let gate = |name: &str| -> Result<Gate> {
                Ok(Gate {
                    weight: s.tensor(&format!("{name}.weight"))?,
                    bias: s.tensor(&format!("{name}.bias"))?,
                })
            };
            Layer::Lstm(LstmCell {
                signal: gate(LSTM_GATES[0])?,
                input_gate: gate(LSTM_GATES[1])?,
                forget_gate: gate(LSTM_GATES[2])?,
                output_gate: gate(LSTM_GATES[3])?,
            })
        }
        "graphconv" => Layer::GraphConv(GraphConv {
            weight: s.tensor("weight")?,
            activation: s.activation()?,
        }),
        "attention" => Layer::Attention(Attention {
            heads: s.usize("heads")?,
            key_dim: s.usize("key_dim")?,
            value_dim: s.usize("value_dim")?,
            w_query: s.tensor("w_query")?,
            w_key: s.tensor("w_key")?,
            w_value: s.tensor("w_value")?,
            w_out: s.tensor("w_out")?,
        }),
        "embedding" => Layer::Embedding(Embedding { table: s.tensor("table")? }),
        other => return Err(Error::parse(*line, *col, format!("unknown layer kind {other:?}"))),
    })
}
