//! Diverse counterfactuals by gradient descent on a proximity, validity and
//! determinantal-diversity objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::network::Network;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfQuery {
    pub x: Vec<f64>,
    pub desired_class: usize,
    pub k: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub immutable: Vec<usize>,
    /// Inclusive `(low, high)` per feature.
    pub ranges: Vec<(f64, f64)>,
    /// Features rounded to whole numbers after optimization.
    pub discrete: Vec<usize>,
    pub lr: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl CfQuery {
    /// Defaults: `k = 3`, `lambda1 = 0.5`, `lambda2 = 1.0`, `lr = 0.05`,
    /// `max_iters = 2000`.
    pub fn new(x: Vec<f64>, desired_class: usize, ranges: Vec<(f64, f64)>) -> Self {
        Self {
            x,
            desired_class,
            k: 3,
            lambda1: 0.5,
            lambda2: 1.0,
            immutable: Vec::new(),
            ranges,
            discrete: Vec::new(),
            lr: 0.05,
            max_iters: 2000,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let m = self.x.len();
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || !self.lambda1.is_finite() || !self.lambda2.is_finite() {
            return Err(Error::invalid("lambda1 and lambda2 must be finite and non-negative"));
        }
        if self.ranges.len() != m {
            return Err(Error::invalid(format!("{} ranges for {m} features", self.ranges.len())));
        }
        for (i, &(lo, hi)) in self.ranges.iter().enumerate() {
            if !(lo <= hi) {
                return Err(Error::invalid(format!("range of feature {i} is empty")));
            }
        }
        for &i in self.immutable.iter().chain(&self.discrete) {
            if i >= m {
                return Err(Error::invalid(format!("feature index {i} out of range")));
            }
        }
        for &i in &self.immutable {
            let (lo, hi) = self.ranges[i];
            if self.x[i] < lo || self.x[i] > hi {
                return Err(Error::invalid(format!("immutable feature {i} lies outside its range")));
            }
        }
        Ok(())
    }

    /// Range widths, with 1 standing in for degenerate ranges.
    pub fn scales(&self) -> Vec<f64> {
        self.ranges
            .iter()
            .map(|&(lo, hi)| if hi > lo { hi - lo } else { 1.0 })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// Mean hinge loss on the desired-class logit.
    pub yloss: f64,
    /// Mean scaled distance to the original row (weighted by `lambda1` in
    /// the total).
    pub proximity: f64,
    /// `det(K)` (weighted by `-lambda2` in the total).
    pub diversity: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfSet {
    pub original: Vec<f64>,
    pub desired_class: usize,
    pub candidates: Vec<Vec<f64>>,
    /// Desired-class probability of each candidate.
    pub probabilities: Vec<f64>,
    pub valid: Vec<bool>,
    pub loss: LossParts,
    pub iterations: usize,
}

impl CfSet {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Mean of `|a_f - b_f| / scale_f`.
pub fn distance(a: &[f64], b: &[f64], scales: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != scales.len() || a.is_empty() {
        return Err(Error::invalid("distance needs equally long, non-empty rows"));
    }
    if scales.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::invalid("distance scales must be positive"));
    }
    Ok(a.iter()
        .zip(b)
        .zip(scales)
        .map(|((x, y), s)| (x - y).abs() / s)
        .sum::<f64>()
        / a.len() as f64)
}

/// `-(1/k) sum_i dist(c_i, x)`.
pub fn proximity(cands: &[Vec<f64>], x: &[f64], scales: &[f64]) -> Result<f64> {
    if cands.is_empty() {
        return Err(Error::invalid("no candidates"));
    }
    let mut total = 0.0;
    for c in cands {
        total += distance(c, x, scales)?;
    }
    Ok(-total / cands.len() as f64)
}

fn kernel(cands: &[Vec<f64>], scales: &[f64]) -> Result<Vec<f64>> {
    let k = cands.len();
    let mut kern = vec![1.0; k * k];
    for i in 0..k {
        for j in i + 1..k {
            let v = 1.0 / (1.0 + distance(&cands[i], &cands[j], scales)?);
            kern[i * k + j] = v;
            kern[j * k + i] = v;
        }
    }
    Ok(kern)
}

/// `det(K)` with `K_ij = 1 / (1 + dist(c_i, c_j))`.
pub fn dpp_diversity(cands: &[Vec<f64>], scales: &[f64]) -> Result<f64> {
    if cands.is_empty() {
        return Err(Error::invalid("no candidates"));
    }
    Ok(Lu::new(&kernel(cands, scales)?, cands.len()).det())
}

/// Desired-class probability and its input gradient.
fn desired_prob(net: &Network, c: &[f64], class: usize, want_grad: bool) -> Result<(f64, Vec<f64>)> {
    let out = net.predict(c)?;
    let binary = out.len() == 1;
    if (binary && class > 1) || (!binary && class >= out.len()) {
        return Err(Error::invalid(format!("desired class {class} not produced by the model")));
    }
    let (idx, sign) = if binary { (0, if class == 1 { 1.0 } else { -1.0 }) } else { (class, 1.0) };
    let p = if binary && class == 0 { 1.0 - out[0] } else { out[idx] };
    let grad = if want_grad {
        net.input_gradient(c, idx)?.into_iter().map(|g| g * sign).collect()
    } else {
        Vec::new()
    };
    Ok((p, grad))
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Loss of a candidate set and its gradient w.r.t. every candidate value.
pub fn cf_loss(net: &Network, query: &CfQuery, cands: &[Vec<f64>]) -> Result<(LossParts, Vec<Vec<f64>>)> {
    query.validate()?;
    let k = cands.len();
    if k == 0 {
        return Err(Error::invalid("no candidates"));
    }
    let m = query.x.len();
    let scales = query.scales();
    let mut grads = vec![vec![0.0; m]; k];
    let mut yloss = 0.0;
    let mut dist_sum = 0.0;
    for (c, g) in cands.iter().zip(grads.iter_mut()) {
        let (p, dp) = desired_prob(net, c, query.desired_class, true)?;
        let h = 1.0 - logit(p);
        if h > 0.0 {
            yloss += h;
            let pc = p.clamp(1e-12, 1.0 - 1e-12);
            if pc == p {
                let dl = -1.0 / (p * (1.0 - p));
                for f in 0..m {
                    g[f] += dl * dp[f] / k as f64;
                }
            }
        }
        dist_sum += distance(c, &query.x, &scales)?;
        for f in 0..m {
            let s = sign(c[f] - query.x[f]);
            g[f] += query.lambda1 * s / (scales[f] * m as f64) / k as f64;
        }
    }
    let kern = kernel(cands, &scales)?;
    let lu = Lu::new(&kern, k);
    let det = lu.det();
    if query.lambda2 > 0.0 && k > 1 {
        match lu.inverse() {
            Some(inv) => {
                for a in 0..k {
                    for j in 0..k {
                        if j == a {
                            continue;
                        }
                        // d det / d K_aj = det * inv[j][a]; K is symmetric so
                        // K_aj and K_ja both move with c_a
                        let coef = det * (inv[j * k + a] + inv[a * k + j]);
                        let kaj = kern[a * k + j];
                        for f in 0..m {
                            let dk = -kaj * kaj * sign(cands[a][f] - cands[j][f]) / (scales[f] * m as f64);
                            grads[a][f] -= query.lambda2 * coef * dk;
                        }
                    }
                }
            }
            None => log::warn!("singular diversity kernel; diversity gradient skipped for this step"),
        }
    }
    let parts = LossParts {
        yloss: yloss / k as f64,
        proximity: dist_sum / k as f64,
        diversity: det,
        total: yloss / k as f64 + query.lambda1 * dist_sum / k as f64 - query.lambda2 * det,
    };
    Ok((parts, grads))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

const STALL_WINDOW: usize = 50;
const STALL_TOL: f64 = 1e-7;

/// Optimizes `k` candidates jointly. Runs Adam in range-normalized
/// coordinates, projecting onto the feature ranges after each step and
/// keeping immutable features pinned to the original row.
pub fn generate_cfs(net: &Network, query: &CfQuery) -> Result<CfSet> {
    query.validate()?;
    let m = query.x.len();
    if net.input_len() != Some(m) {
        return Err(Error::invalid(format!("model input width differs from the row width {m}")));
    }
    let frozen: Vec<bool> = (0..m).map(|f| query.immutable.contains(&f)).collect();
    let lo: Vec<f64> = query.ranges.iter().map(|r| r.0).collect();
    let width: Vec<f64> = query.ranges.iter().map(|r| r.1 - r.0).collect();
    let to_raw = |u: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|f| {
                if frozen[f] || width[f] == 0.0 {
                    if frozen[f] {
                        query.x[f]
                    } else {
                        lo[f]
                    }
                } else {
                    lo[f] + u[f] * width[f]
                }
            })
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(query.seed);
    let mut us: Vec<Vec<f64>> = (0..query.k)
        .map(|_| {
            (0..m)
                .map(|f| {
                    let base = if width[f] > 0.0 { (query.x[f] - lo[f]) / width[f] } else { 0.0 };
                    let noise: f64 = rng.random_range(-0.1..0.1);
                    (base + noise).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m1 = vec![vec![0.0; m]; query.k];
    let mut m2 = vec![vec![0.0; m]; query.k];
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    for t in 1..=query.max_iters {
        let cands: Vec<Vec<f64>> = us.iter().map(|u| to_raw(u)).collect();
        let (parts, grads) = cf_loss(net, query, &cands)?;
        history.push(parts.total);
        iterations = t;
        if history.len() > STALL_WINDOW && history[history.len() - 1 - STALL_WINDOW] - parts.total < STALL_TOL {
            break;
        }
        let c1 = 1.0 - f64::powi(b1, t as i32);
        let c2 = 1.0 - f64::powi(b2, t as i32);
        for a in 0..query.k {
            for f in 0..m {
                if frozen[f] || width[f] == 0.0 {
                    continue;
                }
                let g = grads[a][f] * width[f];
                m1[a][f] = b1 * m1[a][f] + (1.0 - b1) * g;
                m2[a][f] = b2 * m2[a][f] + (1.0 - b2) * g * g;
                let step = query.lr * (m1[a][f] / c1) / ((m2[a][f] / c2).sqrt() + eps);
                us[a][f] = (us[a][f] - step).clamp(0.0, 1.0);
            }
        }
    }
    let mut candidates: Vec<Vec<f64>> = us.iter().map(|u| to_raw(u)).collect();
    for c in &mut candidates {
        for &f in &query.discrete {
            if !frozen[f] {
                let (l, h) = query.ranges[f];
                let mut r = c[f].round();
                if r < l {
                    r = l.ceil();
                }
                if r > h {
                    r = h.floor();
                }
                c[f] = r;
            }
        }
    }
    let mut probabilities = Vec::with_capacity(query.k);
    for c in &candidates {
        probabilities.push(desired_prob(net, c, query.desired_class, false)?.0);
    }
    let valid = probabilities.iter().map(|&p| p >= 0.5).collect();
    let (loss, _) = cf_loss(net, query, &candidates)?;
    Ok(CfSet {
        original: query.x.clone(),
        desired_class: query.desired_class,
        candidates,
        probabilities,
        valid,
        loss,
        iterations,
    })
}
