//! Differentiable fuzzy first-order logic over networks and tabular data.
//!
//! Connectives use the product family (`a b`, `a + b - a b`, `1 - a`,
//! Reichenbach implication). Quantifiers aggregate over dataset rows with
//! generalized means, and a knowledge base is satisfied to the weighted
//! p-mean of its formula degrees. Training ascends that satisfiability.

mod formula;
mod grounding;
mod groups;
pub mod semantics;
mod tape;
mod train;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use formula::{parse_formula, parse_formula_at, Formula, Term};
pub use grounding::{eval_formula, sat, Grounding, Predicate};
pub use groups::{query_groups, GroupBin, GroupQuery};
pub use semantics::{pmean, weighted_pmean};
pub use train::{revise, train_constrained, CycleConfig, Revision, TrainConfig, TrainOutcome};

/// Exponents of the quantifier means.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    /// Universal quantifier and knowledge-base aggregate.
    pub p: f64,
    /// Existential quantifier; positive, so the mean leans toward the max.
    pub p_exists: f64,
}

impl Default for Aggregation {
    fn default() -> Self {
        Self { p: 2.0, p_exists: 6.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedFormula {
    pub formula: Formula,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub formulas: Vec<WeightedFormula>,
    pub aggregation: Aggregation,
}

impl KnowledgeBase {
    pub fn new(aggregation: Aggregation) -> Self {
        Self {
            formulas: Vec::new(),
            aggregation,
        }
    }

    pub fn push(&mut self, formula: Formula, weight: f64) -> Result<()> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::invalid(format!("formula weight {weight} must be finite and >= 0")));
        }
        self.formulas.push(WeightedFormula { formula, weight });
        Ok(())
    }

    pub fn with(mut self, formula: Formula, weight: f64) -> Result<Self> {
        self.push(formula, weight)?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }

    /// Reads the line format: `formula @weight` (weight optional, default
    /// 1), `p = <real>`, `p_exists = <real>`, `#` comments and blank lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kb = KnowledgeBase::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim_start();
            let indent = raw.len() - trimmed.len();
            let body = trimmed.trim_end();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = body.split_once('=') {
                let key = key.trim();
                if key == "p" || key == "p_exists" {
                    let col = indent + body.find('=').unwrap() + 2;
                    let v: f64 = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(line, col, format!("'{}' is not a number", value.trim())))?;
                    if v == 0.0 || !v.is_finite() || (key == "p_exists" && v < 0.0) {
                        return Err(Error::parse(line, col, format!("{key} = {v} is not allowed")));
                    }
                    if key == "p" {
                        kb.aggregation.p = v;
                    } else {
                        kb.aggregation.p_exists = v;
                    }
                    continue;
                }
            }
            let (text, weight) = match body.rsplit_once('@') {
                Some((f, w)) => {
                    let col = indent + f.len() + 2;
                    let w: f64 = w
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(line, col, format!("weight '{}' is not a number", w.trim())))?;
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(Error::parse(line, col, "weights must be finite and >= 0"));
                    }
                    (f, w)
                }
                None => (body, 1.0),
            };
            let formula = parse_formula_at(text, line, indent + 1)?;
            kb.formulas.push(WeightedFormula { formula, weight });
        }
        Ok(kb)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("p = {}\np_exists = {}\n", self.aggregation.p, self.aggregation.p_exists);
        for wf in &self.formulas {
            writeln!(s, "{} @{}", wf.formula, wf.weight).unwrap();
        }
        s
    }
}

/// Degrees of a knowledge base under one parameter state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SatReport {
    pub formulas: Vec<String>,
    pub degrees: Vec<f64>,
    pub sat: f64,
    pub epoch: usize,
    /// Label of the parameter snapshot the degrees were measured on.
    pub snapshot: String,
}
