//! Satisfiability ascent and the query / constrain / retrain cycle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grounding::{sat_parts, Context, Grounding};
use super::groups::{query_groups, GroupQuery};
use super::{KnowledgeBase, SatReport, WeightedFormula};
use crate::error::{Error, Result};
use crate::models::TabularDataset;
use crate::network::Network;
use crate::shapley::{exact_shapley, group_parity, BackgroundSet};
use crate::tensor::Tensor;
use crate::train::Adam;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Recorded for reproducibility. Training is full batch, so no
    /// randomness is drawn.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Sat before each update, then after the last one.
    pub trajectory: Vec<f64>,
    pub report: SatReport,
}

fn report(kb: &KnowledgeBase, degrees: Vec<f64>, sat: f64, epoch: usize, snapshot: &str) -> SatReport {
    SatReport {
        formulas: kb.formulas.iter().map(|wf| wf.formula.to_string()).collect(),
        degrees,
        sat,
        epoch,
        snapshot: snapshot.to_string(),
    }
}

/// Parameter gradients of `-Sat` summed over rows in row order.
fn param_gradients(net: &Network, data: &TabularDataset, seeds: &[Vec<f64>]) -> Result<Vec<Tensor>> {
    let out_dims = net.output_shape().to_vec();
    let per: Vec<Option<Vec<Tensor>>> = data
        .rows
        .par_iter()
        .zip(seeds)
        .map(|(row, seed)| {
            if seed.iter().all(|&s| s == 0.0) {
                return Ok(None);
            }
            let x = Tensor::new(net.input_shape().to_vec(), row.clone())?;
            let trace = net.forward(&x)?;
            let seed = Tensor::new(out_dims.clone(), seed.iter().map(|s| -s).collect())?;
            let g = net.backward(&trace, &seed, true)?;
            Ok(Some(g.params.into_iter().flatten().collect()))
        })
        .collect::<Result<_>>()?;
    let mut acc: Vec<Tensor> = net.params().iter().map(|p| Tensor::zeros(p.dims())).collect();
    for grads in per.into_iter().flatten() {
        for (a, g) in acc.iter_mut().zip(grads) {
            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                *x += y;
            }
        }
    }
    Ok(acc)
}

/// Full-batch Adam ascent on the satisfiability of `kb`. On a non-finite
/// Sat or parameter the run stops with [`Error::Diverged`] carrying the
/// last finite parameters.
pub fn train_constrained(
    net: &mut Network,
    kb: &KnowledgeBase,
    grounding: &Grounding,
    data: &TabularDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if kb.is_empty() {
        return Err(Error::invalid("knowledge base is empty"));
    }
    if !(cfg.lr.is_finite() && cfg.lr >= 0.0) {
        return Err(Error::Config("learning rate must be finite and >= 0".into()));
    }
    let mut adam = Adam::new(cfg.lr);
    let mut trajectory = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let ctx = Context::new(net, data, grounding, kb.aggregation)?;
        let (_, sat, seeds) = sat_parts(&ctx, kb, true)?;
        drop(ctx);
        if !sat.is_finite() {
            return Err(Error::Diverged {
                epoch,
                snapshot: Box::new(net.clone()),
            });
        }
        trajectory.push(sat);
        let grads = param_gradients(net, data, &seeds)?;
        let good = net.clone();
        adam.step(net.params_mut(), &grads);
        if net.params().iter().any(|p| !p.is_finite()) {
            *net = good.clone();
            return Err(Error::Diverged {
                epoch,
                snapshot: Box::new(good),
            });
        }
    }
    let ctx = Context::new(net, data, grounding, kb.aggregation);
    let (degrees, sat, _) = match ctx.and_then(|c| sat_parts(&c, kb, false)) {
        Ok(parts) => parts,
        // a forward pass can overflow once parameters blow up
        Err(Error::Shape { .. }) => {
            return Err(Error::Diverged {
                epoch: cfg.epochs,
                snapshot: Box::new(net.clone()),
            })
        }
        Err(e) => return Err(e),
    };
    if !sat.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            snapshot: Box::new(net.clone()),
        });
    }
    trajectory.push(sat);
    Ok(TrainOutcome {
        trajectory,
        report: report(kb, degrees, sat, cfg.epochs, &format!("epoch-{}", cfg.epochs)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    pub train: TrainConfig,
    /// Binary feature whose groups are compared before and after.
    pub protected: Option<String>,
    pub bins: usize,
    /// Rows explained when measuring attribution parity (0 skips it).
    pub parity_rows: usize,
    pub background: usize,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            protected: None,
            bins: 3,
            parity_rows: 100,
            background: 32,
        }
    }
}

/// Outcome of one revision cycle. `snapshots` holds the parameters before
/// and after retraining.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub kb: KnowledgeBase,
    pub before: SatReport,
    pub after: SatReport,
    pub trajectory: Vec<f64>,
    pub groups_before: Option<GroupQuery>,
    pub groups_after: Option<GroupQuery>,
    /// Mean Shapley value of the protected feature in the protected group
    /// minus that in the unprotected group.
    pub parity_before: Option<f64>,
    pub parity_after: Option<f64>,
    pub snapshots: Vec<Network>,
}

fn parity(net: &Network, data: &TabularDataset, column: usize, cfg: &CycleConfig) -> Result<Option<f64>> {
    if cfg.parity_rows == 0 {
        return Ok(None);
    }
    let bg = BackgroundSet::sample(data, cfg.background.max(1), cfg.train.seed)?;
    let n = cfg.parity_rows.min(data.n_rows());
    let attrs = data.rows[..n]
        .iter()
        .map(|r| exact_shapley(net, r, &bg, 0))
        .collect::<Result<Vec<_>>>()?;
    let flags: Vec<bool> = data.rows[..n].iter().map(|r| r[column] >= 0.5).collect();
    if flags.iter().all(|&f| f) || flags.iter().all(|&f| !f) {
        return Ok(None);
    }
    group_parity(&attrs, &flags, column).map(Some)
}

/// Appends `constraints` to `kb` and retrains `net` from its current
/// parameters. Reports before and after are measured on the extended
/// knowledge base.
pub fn revise(
    net: &mut Network,
    kb: &KnowledgeBase,
    constraints: &[WeightedFormula],
    grounding: &Grounding,
    data: &TabularDataset,
    cfg: &CycleConfig,
) -> Result<Revision> {
    let mut extended = kb.clone();
    for c in constraints {
        extended.push(c.formula.clone(), c.weight)?;
    }
    let measure = |net: &Network| -> Result<(Option<GroupQuery>, Option<f64>)> {
        match &cfg.protected {
            Some(p) => {
                let column = data.feature_index(p)?;
                Ok((Some(query_groups(net, data, p, cfg.bins)?), parity(net, data, column, cfg)?))
            }
            None => Ok((None, None)),
        }
    };
    let ctx = Context::new(net, data, grounding, extended.aggregation)?;
    let (degrees, sat, _) = sat_parts(&ctx, &extended, false)?;
    drop(ctx);
    let before = report(&extended, degrees, sat, 0, "cycle-before");
    let (groups_before, parity_before) = measure(net)?;
    let start = net.clone();
    let (after, trajectory) = if constraints.is_empty() {
        let mut after = before.clone();
        after.snapshot = "cycle-after".into();
        (after, vec![before.sat])
    } else {
        let outcome = train_constrained(net, &extended, grounding, data, &cfg.train)?;
        let mut after = outcome.report;
        after.snapshot = "cycle-after".into();
        (after, outcome.trajectory)
    };
    let (groups_after, parity_after) = measure(net)?;
    Ok(Revision {
        kb: extended,
        before,
        after,
        trajectory,
        groups_before,
        groups_after,
        parity_before,
        parity_after,
        snapshots: vec![start, net.clone()],
    })
}
