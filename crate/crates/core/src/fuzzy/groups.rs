//! Quantile bins of the model score and per-group rates inside them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::semantics::equiv;
use crate::error::{Error, Result};
use crate::models::TabularDataset;
use crate::network::Network;

#[derive(Clone, Debug)]
pub(crate) struct Binning {
    pub assignment: Vec<usize>,
    /// Lowest and highest score per bin.
    pub ranges: Vec<(f64, f64)>,
    /// All scores were equal, so every row sits in one bin.
    pub fallback: bool,
}

/// Equal-count bins of the score computed with `column` replaced by its
/// dataset mean, so membership does not depend on the group itself.
pub(crate) fn bin_rows(net: &Network, data: &TabularDataset, column: usize, output: usize, bins: usize) -> Result<Binning> {
    if bins < 2 {
        return Err(Error::invalid("need at least 2 bins"));
    }
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::invalid("dataset is empty"));
    }
    let mean = data.mean()[column];
    let scores = data
        .rows
        .par_iter()
        .map(|r| {
            let mut z = r.clone();
            z[column] = mean;
            net.predict(&z).map(|p| p[output])
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let (lo, hi) = (scores[order[0]], scores[order[n - 1]]);
    if hi - lo <= 1e-12 {
        log::warn!("all group-blind scores are equal; using a single bin");
        return Ok(Binning {
            assignment: vec![0; n],
            ranges: vec![(lo, hi)],
            fallback: true,
        });
    }
    let mut assignment = vec![0; n];
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); bins];
    for (rank, &r) in order.iter().enumerate() {
        let b = rank * bins / n;
        assignment[r] = b;
        ranges[b].0 = ranges[b].0.min(scores[r]);
        ranges[b].1 = ranges[b].1.max(scores[r]);
    }
    Ok(Binning {
        assignment,
        ranges,
        fallback: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupBin {
    pub index: usize,
    pub score_low: f64,
    pub score_high: f64,
    pub n_protected: usize,
    pub n_unprotected: usize,
    /// Mean predicted score per group.
    pub rate_protected: Option<f64>,
    pub rate_unprotected: Option<f64>,
    /// Fraction predicted positive (score >= 0.5) per group.
    pub positive_protected: Option<f64>,
    pub positive_unprotected: Option<f64>,
    /// Equivalence of the two rates after scaling by the larger one.
    pub degree: Option<f64>,
    /// A group is missing from the bin.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupQuery {
    pub feature: String,
    pub bins: Vec<GroupBin>,
    pub fallback: bool,
    pub warnings: Vec<String>,
}

impl GroupQuery {
    pub fn degree(&self, bin: usize) -> Option<f64> {
        self.bins.get(bin).and_then(|b| b.degree)
    }
}

/// Degree that two rates are equivalent: each is divided by the larger
/// and the ratios are compared with fuzzy equivalence.
pub(crate) fn rate_equivalence(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == 0.0 {
        1.0
    } else {
        equiv(a / m, b / m)
    }
}

/// Rates of network output 0 for the two values of binary feature
/// `protected`, in `bins` quantile bins of the group-blind score.
pub fn query_groups(net: &Network, data: &TabularDataset, protected: &str, bins: usize) -> Result<GroupQuery> {
    let column = data.feature_index(protected)?;
    if let Some(r) = data.rows.iter().position(|r| r[column] != 0.0 && r[column] != 1.0) {
        return Err(Error::invalid(format!("feature '{protected}' is not 0/1 (row {r})")));
    }
    let binning = bin_rows(net, data, column, 0, bins)?;
    let mut warnings = Vec::new();
    if binning.fallback {
        warnings.push("all group-blind scores are equal; using a single bin".to_string());
    }
    let preds = data
        .rows
        .par_iter()
        .map(|r| net.predict(r).map(|p| p[0]))
        .collect::<Result<Vec<f64>>>()?;
    let mut out = Vec::new();
    for (index, &(lo, hi)) in binning.ranges.iter().enumerate() {
        let (mut sp, mut su, mut pp, mut pu, mut np, mut nu) = (0.0, 0.0, 0usize, 0usize, 0usize, 0usize);
        for (r, &b) in binning.assignment.iter().enumerate() {
            if b != index {
                continue;
            }
            let positive = (preds[r] >= 0.5) as usize;
            if data.rows[r][column] == 1.0 {
                sp += preds[r];
                pp += positive;
                np += 1;
            } else {
                su += preds[r];
                pu += positive;
                nu += 1;
            }
        }
        let ratio = |s: f64, k: usize| (k > 0).then(|| s / k as f64);
        let (rp, ru) = (ratio(sp, np), ratio(su, nu));
        let flagged = np == 0 || nu == 0;
        if flagged {
            warnings.push(format!("bin {index} lacks one of the groups"));
        }
        out.push(GroupBin {
            index,
            score_low: lo,
            score_high: hi,
            n_protected: np,
            n_unprotected: nu,
            rate_protected: rp,
            rate_unprotected: ru,
            positive_protected: ratio(pp as f64, np),
            positive_unprotected: ratio(pu as f64, nu),
            degree: rp.zip(ru).map(|(a, b)| rate_equivalence(a, b)),
            flagged,
        });
    }
    Ok(GroupQuery {
        feature: protected.to_string(),
        bins: out,
        fallback: binning.fallback,
        warnings,
    })
}
