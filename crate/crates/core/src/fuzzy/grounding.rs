use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::formula::{Formula, Term};
use super::groups::{bin_rows, Binning};
use super::semantics::normalize_weights;
use super::tape::Tape;
use super::{Aggregation, KnowledgeBase, SatReport};
use crate::error::{Error, Result};
use crate::layer::{Activation, Layer};
use crate::models::TabularDataset;
use crate::network::Network;

/// Where a predicate's truth degree comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Predicate {
    /// Sigmoid output `output` of the network on the row.
    Model { output: usize },
    /// 1 when the row's label equals `class`, else 0.
    Label { class: usize },
    /// The row's value in `column`, which must lie in `[0, 1]`.
    Feature { column: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub predicates: BTreeMap<String, Predicate>,
    /// Named constants, each a fixed row.
    pub constants: BTreeMap<String, usize>,
}

impl Grounding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, predicate: Predicate) -> Self {
        self.predicates.insert(name.into(), predicate);
        self
    }

    pub fn with_constant(mut self, name: &str, row: usize) -> Self {
        self.constants.insert(name.into(), row);
        self
    }

    /// `P` for network output 0, `label` for the positive class, and one
    /// predicate per feature whose values all lie in `[0, 1]`.
    pub fn standard(data: &TabularDataset) -> Self {
        let mut g = Grounding::new()
            .with("P", Predicate::Model { output: 0 })
            .with("label", Predicate::Label { class: 1 });
        for (j, name) in data.feature_names.iter().enumerate() {
            if data.rows.iter().all(|r| (0.0..=1.0).contains(&r[j])) {
                g.predicates.insert(name.clone(), Predicate::Feature { column: j });
            }
        }
        g
    }

    /// Checks the grounding against a network and dataset.
    pub fn validate(&self, net: &Network, data: &TabularDataset) -> Result<()> {
        let outputs = net.output_len().unwrap_or(0);
        for (name, p) in &self.predicates {
            match *p {
                Predicate::Model { output } => {
                    if !ends_in_sigmoid(net) {
                        return Err(Error::Config(format!(
                            "predicate '{name}': the network must end in a sigmoid so truth degrees lie in [0, 1]"
                        )));
                    }
                    if output >= outputs {
                        return Err(Error::Config(format!(
                            "predicate '{name}': output {output} out of range for {outputs} outputs"
                        )));
                    }
                }
                Predicate::Label { class } => {
                    if class > 1 {
                        return Err(Error::Config(format!("predicate '{name}': labels are 0/1")));
                    }
                }
                Predicate::Feature { column } => {
                    if column >= data.n_features() {
                        return Err(Error::Config(format!("predicate '{name}': column {column} out of range")));
                    }
                    if let Some(r) = data.rows.iter().position(|r| !(0.0..=1.0).contains(&r[column])) {
                        return Err(Error::Config(format!(
                            "predicate '{name}': row {r} has {} outside [0, 1]",
                            data.rows[r][column]
                        )));
                    }
                }
            }
        }
        if let Some((name, &row)) = self.constants.iter().find(|(_, &r)| r >= data.n_rows()) {
            return Err(Error::Config(format!("constant '{name}' names row {row} of {}", data.n_rows())));
        }
        Ok(())
    }
}

fn ends_in_sigmoid(net: &Network) -> bool {
    match net.layers().last() {
        Some(Layer::Dense(d)) => d.activation == Activation::Sigmoid,
        Some(Layer::Conv2D(c)) => c.activation == Activation::Sigmoid,
        Some(Layer::GraphConv(g)) => g.activation == Activation::Sigmoid,
        _ => false,
    }
}

/// Network, data and grounding with every row's prediction precomputed.
pub(crate) struct Context<'a> {
    pub net: &'a Network,
    pub data: &'a TabularDataset,
    pub grounding: &'a Grounding,
    pub aggregation: Aggregation,
    pub predictions: Vec<Vec<f64>>,
}

impl<'a> Context<'a> {
    pub fn new(net: &'a Network, data: &'a TabularDataset, grounding: &'a Grounding, aggregation: Aggregation) -> Result<Self> {
        grounding.validate(net, data)?;
        let predictions = data
            .rows
            .par_iter()
            .map(|r| net.predict(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            net,
            data,
            grounding,
            aggregation,
            predictions,
        })
    }
}

/// Formula evaluation onto a tape. Model predictions become leaves keyed
/// by `(row, output)`.
pub(crate) struct Builder<'c, 'a> {
    ctx: &'c Context<'a>,
    pub tape: Tape,
    pub leaves: HashMap<(usize, usize), usize>,
    env: Vec<(String, usize)>,
    binnings: HashMap<(usize, usize), Binning>,
}

impl<'c, 'a> Builder<'c, 'a> {
    pub fn new(ctx: &'c Context<'a>) -> Self {
        Self {
            ctx,
            tape: Tape::default(),
            leaves: HashMap::new(),
            env: Vec::new(),
            binnings: HashMap::new(),
        }
    }

    fn leaf(&mut self, row: usize, output: usize) -> usize {
        let v = self.ctx.predictions[row][output];
        let tape = &mut self.tape;
        *self.leaves.entry((row, output)).or_insert_with(|| tape.constant(v))
    }

    fn predicate(&self, name: &str) -> Result<&'a Predicate> {
        self.ctx
            .grounding
            .predicates
            .get(name)
            .ok_or_else(|| Error::invalid(format!("predicate '{name}' is not grounded")))
    }

    fn row(&self, term: &Term) -> Result<usize> {
        let n = self.ctx.data.n_rows();
        let row = match term {
            Term::Row(r) => *r,
            Term::Name(name) => match self.env.iter().rev().find(|(v, _)| v == name) {
                Some(&(_, r)) => r,
                None => *self
                    .ctx
                    .grounding
                    .constants
                    .get(name)
                    .ok_or_else(|| Error::invalid(format!("unbound variable '{name}'")))?,
            },
        };
        if row >= n {
            return Err(Error::invalid(format!("row #{row} out of range for {n} rows")));
        }
        Ok(row)
    }

    fn quantify(&mut self, var: &str, body: &Formula, p: f64) -> Result<usize> {
        let n = self.ctx.data.n_rows();
        let mut parts = Vec::with_capacity(n);
        for r in 0..n {
            self.env.push((var.to_string(), r));
            let v = self.build(body);
            self.env.pop();
            parts.push(v?);
        }
        if parts.is_empty() {
            return Err(Error::invalid("cannot quantify over an empty dataset"));
        }
        self.tape.pmean(&parts, p)
    }

    pub fn build(&mut self, f: &Formula) -> Result<usize> {
        match f {
            Formula::Atom { predicate, term } => {
                let row = self.row(term)?;
                Ok(match *self.predicate(predicate)? {
                    Predicate::Model { output } => self.leaf(row, output),
                    Predicate::Label { class } => {
                        let v = (self.ctx.data.labels[row] == class) as u8 as f64;
                        self.tape.constant(v)
                    }
                    Predicate::Feature { column } => {
                        let v = self.ctx.data.rows[row][column];
                        self.tape.constant(v)
                    }
                })
            }
            Formula::Not(a) => {
                let a = self.build(a)?;
                Ok(self.tape.not(a))
            }
            Formula::And(xs) | Formula::Or(xs) => {
                let mut acc = self.build(&xs[0])?;
                for x in &xs[1..] {
                    let b = self.build(x)?;
                    acc = if matches!(f, Formula::And(_)) {
                        self.tape.and(acc, b)
                    } else {
                        self.tape.or(acc, b)
                    };
                }
                Ok(acc)
            }
            Formula::Implies(a, b) => {
                let (a, b) = (self.build(a)?, self.build(b)?);
                Ok(self.tape.implies(a, b))
            }
            Formula::Equiv(a, b) => {
                let (a, b) = (self.build(a)?, self.build(b)?);
                Ok(self.tape.equiv(a, b))
            }
            Formula::ForAll { var, body } => self.quantify(var, body, self.ctx.aggregation.p),
            Formula::Exists { var, body } => self.quantify(var, body, self.ctx.aggregation.p_exists),
            Formula::GroupEquiv {
                predicate,
                feature,
                bins,
                bin,
            } => {
                let output = match *self.predicate(predicate)? {
                    Predicate::Model { output } => output,
                    _ => {
                        return Err(Error::invalid(format!(
                            "groupequiv needs a model predicate, '{predicate}' is not one"
                        )))
                    }
                };
                let column = self.ctx.data.feature_index(feature)?;
                if !self.binnings.contains_key(&(column, *bins)) {
                    let b = bin_rows(self.ctx.net, self.ctx.data, column, output, *bins)?;
                    self.binnings.insert((column, *bins), b);
                }
                let binning = &self.binnings[&(column, *bins)];
                let target = if binning.fallback { 0 } else { *bin };
                let (mut prot, mut unprot) = (Vec::new(), Vec::new());
                for (r, &b) in binning.assignment.iter().enumerate() {
                    if b == target {
                        if self.ctx.data.rows[r][column] >= 0.5 {
                            prot.push(r);
                        } else {
                            unprot.push(r);
                        }
                    }
                }
                for (rows, value) in [(&prot, 1), (&unprot, 0)] {
                    if rows.is_empty() {
                        return Err(Error::invalid(format!("bin {bin} has no rows with {feature} = {value}")));
                    }
                }
                let lp: Vec<usize> = prot.iter().map(|&r| self.leaf(r, output)).collect();
                let lu: Vec<usize> = unprot.iter().map(|&r| self.leaf(r, output)).collect();
                let a = self.tape.mean(&lp);
                let b = self.tape.mean(&lu);
                let m = self.tape.max(a, b);
                if self.tape.value(m) == 0.0 {
                    return Ok(self.tape.constant(1.0));
                }
                let ra = self.tape.div(a, m);
                let rb = self.tape.div(b, m);
                Ok(self.tape.equiv(ra, rb))
            }
        }
    }
}

fn check_closed(f: &Formula, g: &Grounding) -> Result<()> {
    if let Some(name) = f.free_names().into_iter().find(|n| !g.constants.contains_key(n)) {
        return Err(Error::invalid(format!("unbound variable '{name}' in {f}")));
    }
    if let Some(p) = f.predicates().into_iter().find(|p| !g.predicates.contains_key(p)) {
        return Err(Error::invalid(format!("predicate '{p}' is not grounded")));
    }
    Ok(())
}

/// Truth degree of a closed formula.
pub fn eval_formula(
    net: &Network,
    grounding: &Grounding,
    data: &TabularDataset,
    formula: &Formula,
    aggregation: &Aggregation,
) -> Result<f64> {
    check_closed(formula, grounding)?;
    let ctx = Context::new(net, data, grounding, *aggregation)?;
    let mut b = Builder::new(&ctx);
    let out = b.build(formula)?;
    Ok(b.tape.value(out))
}

/// Per-formula degrees, the aggregate, and (when `with_gradient`) the
/// derivative of the aggregate with respect to every model prediction,
/// indexed `[row][output]`.
pub(crate) fn sat_parts(ctx: &Context<'_>, kb: &KnowledgeBase, with_gradient: bool) -> Result<(Vec<f64>, f64, Vec<Vec<f64>>)> {
    if kb.is_empty() {
        return Err(Error::invalid("knowledge base is empty"));
    }
    for wf in &kb.formulas {
        check_closed(&wf.formula, ctx.grounding)?;
    }
    let weights: Vec<f64> = kb.formulas.iter().map(|wf| wf.weight).collect();
    let weights = normalize_weights(&weights, weights.len())?;
    let mut b = Builder::new(ctx);
    let roots = kb
        .formulas
        .iter()
        .map(|wf| b.build(&wf.formula))
        .collect::<Result<Vec<_>>>()?;
    let degrees: Vec<f64> = roots.iter().map(|&r| b.tape.value(r)).collect();
    let agg = b.tape.weighted_pmean(&roots, &weights, kb.aggregation.p)?;
    let sat = b.tape.value(agg);
    let mut grads = Vec::new();
    if with_gradient {
        let outs = ctx.predictions.first().map_or(0, |p| p.len());
        grads = vec![vec![0.0; outs]; ctx.data.n_rows()];
        let adj = b.tape.gradient(agg);
        for (&(row, output), &leaf) in &b.leaves {
            grads[row][output] += adj[leaf];
        }
    }
    Ok((degrees, sat, grads))
}

/// Satisfiability of a knowledge base.
pub fn sat(net: &Network, grounding: &Grounding, data: &TabularDataset, kb: &KnowledgeBase) -> Result<SatReport> {
    let ctx = Context::new(net, data, grounding, kb.aggregation)?;
    let (degrees, sat, _) = sat_parts(&ctx, kb, false)?;
    Ok(SatReport {
        formulas: kb.formulas.iter().map(|wf| wf.formula.to_string()).collect(),
        degrees,
        sat,
        epoch: 0,
        snapshot: "current".into(),
    })
}
