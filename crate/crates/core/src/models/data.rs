//! Tabular datasets, CSV ingestion and the synthetic generators.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Integer,
    /// Integer-coded category.
    Categorical,
}

impl FeatureKind {
    fn name(self) -> &'static str {
        match self {
            FeatureKind::Continuous => "continuous",
            FeatureKind::Integer => "integer",
            FeatureKind::Categorical => "categorical",
        }
    }

    pub fn is_discrete(self) -> bool {
        self != FeatureKind::Continuous
    }
}

/// The rule a synthetic generator used to draw labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratingRule {
    /// `P(label = 1) = sigmoid(bias + sum_i weights[i] * (x_i - centers[i]))`
    Credit {
        weights: Vec<f64>,
        centers: Vec<f64>,
        bias: f64,
    },
    /// Risk `r = sigmoid(bias + sum_i weights[i] * x_i)` over the
    /// non-protected features. Rows with `low_cut <= r < high_cut` copy the
    /// protected value into the label with probability `bias_strength`.
    Recidivism {
        weights: Vec<f64>,
        bias: f64,
        low_cut: f64,
        high_cut: f64,
        bias_strength: f64,
        protected: usize,
    },
}

impl GeneratingRule {
    /// Probability of a positive label (risk for recidivism data, ignoring
    /// the injected mid-tercile bias).
    pub fn probability(&self, row: &[f64]) -> f64 {
        match self {
            GeneratingRule::Credit { weights, centers, bias } => sigmoid(
                bias + weights
                    .iter()
                    .zip(centers)
                    .zip(row)
                    .map(|((w, c), x)| w * (x - c))
                    .sum::<f64>(),
            ),
            GeneratingRule::Recidivism { weights, bias, .. } => {
                sigmoid(bias + weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    pub feature_names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    pub protected: Vec<bool>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub rule: Option<GeneratingRule>,
}

impl TabularDataset {
    pub fn new(
        feature_names: Vec<String>,
        kinds: Vec<FeatureKind>,
        protected: Vec<bool>,
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let m = feature_names.len();
        if kinds.len() != m || protected.len() != m {
            return Err(Error::invalid("feature names, kinds and protected flags differ in length"));
        }
        if rows.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(Error::invalid(format!("row {i} has {} values, expected {m}", r.len())));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("row {i} has a non-finite value")));
            }
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(Error::invalid(format!("label of row {i} is not 0/1")));
        }
        Ok(Self {
            feature_names,
            kinds,
            protected,
            rows,
            labels,
            rule: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::invalid(format!("unknown feature {name:?}")))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.rows.len().max(1) as f64;
        (0..self.n_features())
            .map(|j| self.rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect()
    }

    /// Population standard deviation per column; constant columns get 1.
    pub fn std(&self) -> Vec<f64> {
        let mean = self.mean();
        let n = self.rows.len().max(1) as f64;
        (0..self.n_features())
            .map(|j| {
                let v = self.rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Observed `(min, max)` per column.
    pub fn ranges(&self) -> Vec<(f64, f64)> {
        (0..self.n_features())
            .map(|j| {
                self.rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r[j]), hi.max(r[j]))
                })
            })
            .collect()
    }

    /// Rows `[start, end)` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.rows.len());
        Self {
            rows: self.rows[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
            ..self.clone_schema()
        }
    }

    fn clone_schema(&self) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            kinds: self.kinds.clone(),
            protected: self.protected.clone(),
            rows: Vec::new(),
            labels: Vec::new(),
            rule: self.rule.clone(),
        }
    }

    /// Header cells are `name[:kind][:protected]`; the column called `label`
    /// holds the 0/1 target.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self
            .feature_names
            .iter()
            .zip(&self.kinds)
            .zip(&self.protected)
            .map(|((n, k), &p)| {
                let mut h = format!("{n}:{}", k.name());
                if p {
                    h.push_str(":protected");
                }
                h
            })
            .collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (r, l) in self.rows.iter().zip(&self.labels) {
            let mut rec: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
            rec.push(l.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers()?.clone();
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        let mut protected = Vec::new();
        let mut label_col = None;
        for (c, cell) in header.iter().enumerate() {
            let mut parts = cell.split(':').map(str::trim);
            let name = parts.next().unwrap_or_default();
            if name == "label" {
                label_col = Some(c);
                continue;
            }
            if name.is_empty() {
                return Err(Error::parse(1, c + 1, "empty column name"));
            }
            let mut kind = FeatureKind::Continuous;
            let mut prot = false;
            for p in parts {
                match p {
                    "continuous" => kind = FeatureKind::Continuous,
                    "integer" => kind = FeatureKind::Integer,
                    "categorical" => kind = FeatureKind::Categorical,
                    "protected" => prot = true,
                    other => {
                        return Err(Error::parse(1, c + 1, format!("unknown column annotation {other:?}")))
                    }
                }
            }
            names.push(name.to_string());
            kinds.push(kind);
            protected.push(prot);
        }
        let label_col = label_col.ok_or_else(|| Error::parse(1, 1, "header has no `label` column"))?;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != header.len() {
                return Err(Error::parse(line, 1, format!("expected {} cells, got {}", header.len(), rec.len())));
            }
            let mut row = Vec::with_capacity(names.len());
            for (c, cell) in rec.iter().enumerate() {
                let cell = cell.trim();
                if cell.is_empty() {
                    return Err(Error::parse(line, c + 1, "missing value"));
                }
                if c == label_col {
                    let l: usize = cell
                        .parse()
                        .ok()
                        .filter(|&l| l <= 1)
                        .ok_or_else(|| Error::parse(line, c + 1, format!("label must be 0 or 1, got {cell:?}")))?;
                    labels.push(l);
                    continue;
                }
                let v: f64 = cell
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| Error::parse(line, c + 1, format!("not a finite number: {cell:?}")))?;
                row.push(v);
            }
            rows.push(row);
        }
        Self::new(names, kinds, protected, rows, labels)
    }
}

fn owned(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Loan repayment data: `payment_delay_mean` (days), `age` (years),
/// `loan_amount`, `employed` (0/1). Label 1 means the loan was repaid.
pub fn synth_credit(n_rows: usize, seed: u64) -> Result<TabularDataset> {
    if n_rows == 0 {
        return Err(Error::invalid("n_rows must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = vec![-0.18, 0.03, -0.00015, 1.2];
    let centers = vec![10.0, 45.0, 10_500.0, 0.7];
    let rule = GeneratingRule::Credit {
        weights,
        centers,
        bias: -0.15,
    };
    let mut rows = Vec::with_capacity(n_rows);
    let mut labels = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let u: f64 = rng.random();
        let delay = (-(1.0 - u).ln() * 10.0).min(60.0);
        let age = rng.random_range(21..=70) as f64;
        let amount = rng.random_range(1000.0..20_000.0f64).round();
        let employed = (rng.random::<f64>() < 0.7) as u8 as f64;
        let row = vec![delay, age, amount, employed];
        let p = rule.probability(&row);
        labels.push((rng.random::<f64>() < p) as usize);
        rows.push(row);
    }
    let mut ds = TabularDataset::new(
        owned(&["payment_delay_mean", "age", "loan_amount", "employed"]),
        vec![
            FeatureKind::Continuous,
            FeatureKind::Integer,
            FeatureKind::Continuous,
            FeatureKind::Categorical,
        ],
        vec![false; 4],
        rows,
        labels,
    )?;
    ds.rule = Some(rule);
    Ok(ds)
}

/// Reoffence data with features `priors`, `age`, `charge_degree` and the
/// protected `group`. Outside the middle risk tercile the label ignores
/// `group`; inside it the label equals `group` with probability
/// `bias_strength`.
pub fn synth_recidivism(n_rows: usize, bias_strength: f64, seed: u64) -> Result<TabularDataset> {
    if n_rows == 0 {
        return Err(Error::invalid("n_rows must be at least 1"));
    }
    if !(0.0..=1.0).contains(&bias_strength) {
        return Err(Error::invalid("bias_strength must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = vec![0.35, -0.05, 0.8, 0.0];
    let bias = -0.6;
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        // geometric-ish prior count
        let mut priors = 0.0;
        while priors < 12.0 && rng.random::<f64>() < 0.65 {
            priors += 1.0;
        }
        let age = rng.random_range(18..=70) as f64;
        let charge = (rng.random::<f64>() < 0.4) as u8 as f64;
        let group = (rng.random::<f64>() < 0.5) as u8 as f64;
        rows.push(vec![priors, age - 35.0, charge, group]);
    }
    // tercile cut points of the risk score
    let risk = |r: &[f64]| sigmoid(bias + weights.iter().zip(r).map(|(w, x)| w * x).sum::<f64>());
    let mut sorted: Vec<f64> = rows.iter().map(|r| risk(r)).collect();
    sorted.sort_by(f64::total_cmp);
    let cut = |q: f64| sorted[((sorted.len() as f64 * q) as usize).min(sorted.len() - 1)];
    let (low_cut, high_cut) = (cut(1.0 / 3.0), cut(2.0 / 3.0));
    let mut labels = Vec::with_capacity(n_rows);
    for r in &rows {
        let p = risk(r);
        let mid = p >= low_cut && p < high_cut;
        // both draws always happen so the stream does not depend on bias
        let copy = rng.random::<f64>() < bias_strength;
        let draw = (rng.random::<f64>() < p) as usize;
        labels.push(if mid && copy { r[3] as usize } else { draw });
    }
    for r in &mut rows {
        r[1] += 35.0;
    }
    let rule = GeneratingRule::Recidivism {
        weights: weights.clone(),
        bias: bias - 35.0 * weights[1],
        low_cut,
        high_cut,
        bias_strength,
        protected: 3,
    };
    let mut ds = TabularDataset::new(
        owned(&["priors", "age", "charge_degree", "group"]),
        vec![
            FeatureKind::Integer,
            FeatureKind::Integer,
            FeatureKind::Categorical,
            FeatureKind::Categorical,
        ],
        vec![false, false, false, true],
        rows,
        labels,
    )?;
    ds.rule = Some(rule);
    Ok(ds)
}
