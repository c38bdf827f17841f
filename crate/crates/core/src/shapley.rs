//! Shapley-value attribution with interventional coalition values.
//!
//! The value of a coalition `S` is the model output averaged over a
//! background set, with the features in `S` pinned to the explained row.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::TabularDataset;
use crate::network::Network;

/// Largest feature count for exact enumeration.
pub const MAX_EXACT_FEATURES: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundSet {
    rows: Vec<Vec<f64>>,
}

impl BackgroundSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows
            .first()
            .map(|r| r.len())
            .ok_or_else(|| Error::invalid("background set is empty"))?;
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::invalid("background rows differ in width"));
        }
        Ok(Self { rows })
    }

    /// `n` rows drawn without replacement (all rows when `n` is larger).
    pub fn sample(data: &TabularDataset, n: usize, seed: u64) -> Result<Self> {
        let mut idx: Vec<usize> = (0..data.n_rows()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        idx.truncate(n.max(1));
        idx.sort_unstable();
        Self::new(idx.into_iter().map(|i| data.rows[i].clone()).collect())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn width(&self) -> usize {
        self.rows[0].len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        (0..self.width())
            .map(|j| self.rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect()
    }
}

/// `phi0 + sum(phi)` approximates the explained output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub phi0: f64,
    pub phi: Vec<f64>,
    /// Per-feature standard error, present for sampled estimates.
    pub stderr: Option<Vec<f64>>,
    pub feature_names: Vec<String>,
    pub output: usize,
}

impl Attribution {
    pub fn total(&self) -> f64 {
        self.phi0 + self.phi.iter().sum::<f64>()
    }
}

fn check(net: &Network, x: &[f64], bg: &BackgroundSet, out: usize) -> Result<()> {
    let width = net
        .input_len()
        .ok_or_else(|| Error::Unsupported("shapley needs a fixed-width input".into()))?;
    if x.len() != width || bg.width() != width {
        return Err(Error::invalid(format!(
            "row has {} features and background {}, model expects {width}",
            x.len(),
            bg.width()
        )));
    }
    let outs = net.output_len().unwrap_or(0);
    if out >= outs {
        return Err(Error::invalid(format!("output index {out} out of range for {outs} outputs")));
    }
    Ok(())
}

fn value_with(net: &Network, x: &[f64], fixed: &[bool], bg: &BackgroundSet, out: usize) -> Result<f64> {
    let mut z = vec![0.0; x.len()];
    let mut total = 0.0;
    for b in &bg.rows {
        for i in 0..x.len() {
            z[i] = if fixed[i] { x[i] } else { b[i] };
        }
        total += net.predict(&z)?[out];
    }
    Ok(total / bg.rows.len() as f64)
}

/// Mean model output over the background with features in `subset` pinned
/// to `x`.
pub fn coalition_value(net: &Network, x: &[f64], subset: &[usize], bg: &BackgroundSet, out: usize) -> Result<f64> {
    check(net, x, bg, out)?;
    let mut fixed = vec![false; x.len()];
    for &i in subset {
        if i >= x.len() {
            return Err(Error::invalid(format!("feature {i} out of range")));
        }
        fixed[i] = true;
    }
    value_with(net, x, &fixed, bg, out)
}

fn mask_to_fixed(mask: usize, m: usize) -> Vec<bool> {
    (0..m).map(|i| mask >> i & 1 == 1).collect()
}

/// `|S|! (M - |S| - 1)! / M!` indexed by `|S|`.
pub fn shapley_weights(m: usize) -> Vec<f64> {
    (0..m)
        .map(|s| {
            // 1 / (M * C(M-1, s))
            let mut c = 1.0;
            for k in 0..s {
                c = c * (m - 1 - k) as f64 / (k + 1) as f64;
            }
            1.0 / (m as f64 * c)
        })
        .collect()
}

/// Values of all `2^M` coalitions, indexed by bit mask. `order` only changes
/// the order in which coalitions are evaluated, never the table.
pub fn coalition_table(
    net: &Network,
    x: &[f64],
    bg: &BackgroundSet,
    out: usize,
    order: Option<&[usize]>,
) -> Result<Vec<f64>> {
    check(net, x, bg, out)?;
    let m = x.len();
    if m > MAX_EXACT_FEATURES {
        return Err(Error::Unsupported(format!(
            "{m} features exceed the exact limit of {MAX_EXACT_FEATURES}; use sampled_shapley"
        )));
    }
    let count = 1usize << m;
    let masks: Vec<usize> = match order {
        Some(o) => {
            let mut seen = vec![false; count];
            if o.len() != count || o.iter().any(|&k| k >= count || std::mem::replace(&mut seen[k], true)) {
                return Err(Error::invalid("evaluation order must be a permutation of all coalitions"));
            }
            o.to_vec()
        }
        None => (0..count).collect(),
    };
    let evaluated: Vec<(usize, f64)> = masks
        .par_iter()
        .map(|&mask| Ok((mask, value_with(net, x, &mask_to_fixed(mask, m), bg, out)?)))
        .collect::<Result<_>>()?;
    let mut table = vec![0.0; count];
    for (mask, v) in evaluated {
        table[mask] = v;
    }
    Ok(table)
}

/// Shapley values from a full coalition table. The reduction always runs in
/// ascending mask order.
pub fn shapley_from_table(table: &[f64], m: usize) -> Vec<f64> {
    let w = shapley_weights(m);
    (0..m)
        .map(|i| {
            let bit = 1usize << i;
            let mut phi = 0.0;
            for mask in 0..table.len() {
                if mask & bit == 0 {
                    let s = mask.count_ones() as usize;
                    phi += w[s] * (table[mask | bit] - table[mask]);
                }
            }
            phi
        })
        .collect()
}

pub fn exact_shapley(net: &Network, x: &[f64], bg: &BackgroundSet, out: usize) -> Result<Attribution> {
    exact_shapley_ordered(net, x, bg, out, None)
}

/// [`exact_shapley`] evaluating coalitions in a caller-chosen order.
pub fn exact_shapley_ordered(
    net: &Network,
    x: &[f64],
    bg: &BackgroundSet,
    out: usize,
    order: Option<&[usize]>,
) -> Result<Attribution> {
    let table = coalition_table(net, x, bg, out, order)?;
    Ok(Attribution {
        phi0: table[0],
        phi: shapley_from_table(&table, x.len()),
        stderr: None,
        feature_names: net.meta.feature_names.clone(),
        output: out,
    })
}

/// Permutation-sampling estimate with per-feature standard errors.
pub fn sampled_shapley(
    net: &Network,
    x: &[f64],
    bg: &BackgroundSet,
    out: usize,
    n_permutations: usize,
    seed: u64,
) -> Result<Attribution> {
    check(net, x, bg, out)?;
    if n_permutations == 0 {
        return Err(Error::invalid("n_permutations must be at least 1"));
    }
    let m = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<usize>> = (0..n_permutations)
        .map(|_| {
            let mut p: Vec<usize> = (0..m).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let phi0 = value_with(net, x, &vec![false; m], bg, out)?;
    let deltas: Vec<Vec<f64>> = perms
        .par_iter()
        .map(|perm| {
            let mut fixed = vec![false; m];
            let mut prev = phi0;
            let mut d = vec![0.0; m];
            for &i in perm {
                fixed[i] = true;
                let v = value_with(net, x, &fixed, bg, out)?;
                d[i] = v - prev;
                prev = v;
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let n = n_permutations as f64;
    let mut phi = vec![0.0; m];
    for d in &deltas {
        for i in 0..m {
            phi[i] += d[i];
        }
    }
    phi.iter_mut().for_each(|p| *p /= n);
    let stderr = (0..m)
        .map(|i| {
            if n_permutations < 2 {
                return 0.0;
            }
            let var = deltas.iter().map(|d| (d[i] - phi[i]).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();
    Ok(Attribution {
        phi0,
        phi,
        stderr: Some(stderr),
        feature_names: net.meta.feature_names.clone(),
        output: out,
    })
}

/// `phi0 + sum_i z_i phi_i` for a binary presence vector.
pub fn explanation_model(attr: &Attribution, z: &[u8]) -> Result<f64> {
    if z.len() != attr.phi.len() || z.iter().any(|&b| b > 1) {
        return Err(Error::invalid("presence vector must be 0/1 with one entry per feature"));
    }
    Ok(attr.phi0 + attr.phi.iter().zip(z).map(|(p, &b)| p * b as f64).sum::<f64>())
}

/// Mean attribution of `feature` in the protected group minus the mean in
/// the unprotected group.
pub fn group_parity(attrs: &[Attribution], protected: &[bool], feature: usize) -> Result<f64> {
    if attrs.is_empty() || attrs.len() != protected.len() {
        return Err(Error::invalid("need one group flag per attribution"));
    }
    let (mut sp, mut np, mut su, mut nu) = (0.0, 0usize, 0.0, 0usize);
    for (a, &p) in attrs.iter().zip(protected) {
        let v = *a
            .phi
            .get(feature)
            .ok_or_else(|| Error::invalid(format!("feature {feature} out of range")))?;
        if p {
            sp += v;
            np += 1;
        } else {
            su += v;
            nu += 1;
        }
    }
    if np == 0 || nu == 0 {
        return Err(Error::invalid("group parity needs both groups present"));
    }
    Ok(sp / np as f64 - su / nu as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_over_subsets_to_one() {
        // sum_s C(M-1, s) * w(s) == 1
        for m in 1..10 {
            let w = shapley_weights(m);
            let mut c = 1.0;
            let mut total = 0.0;
            for (s, ws) in w.iter().enumerate() {
                total += c * ws;
                c = c * (m - 1 - s) as f64 / (s + 1) as f64;
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parity_constructed_means() {
        let mk = |v: f64| Attribution {
            phi0: 0.0,
            phi: vec![v],
            stderr: None,
            feature_names: vec![],
            output: 0,
        };
        let attrs = vec![mk(1.0), mk(1.0), mk(-1.0), mk(-1.0)];
        assert_eq!(group_parity(&attrs, &[true, true, false, false], 0).unwrap(), 2.0);
        assert!(group_parity(&attrs, &[true; 4], 0).is_err());
    }
}
