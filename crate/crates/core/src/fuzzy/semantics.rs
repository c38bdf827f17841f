//! Product-family connectives and generalized means on plain scalars.

use crate::error::{Error, Result};

/// Zero inputs are raised to this before a negative-exponent mean.
pub const NEGATIVE_P_FLOOR: f64 = 1e-12;

pub fn not(a: f64) -> f64 {
    1.0 - a
}

/// Product t-norm.
pub fn and(a: f64, b: f64) -> f64 {
    a * b
}

/// Probabilistic sum. Results are clamped to `[0, 1]` to absorb rounding.
pub fn or(a: f64, b: f64) -> f64 {
    (a + b - a * b).clamp(0.0, 1.0)
}

/// Reichenbach implication `1 - a + a b`.
pub fn implies(a: f64, b: f64) -> f64 {
    (1.0 - a + a * b).clamp(0.0, 1.0)
}

/// Material equivalence as the conjunction of both implications.
pub fn equiv(a: f64, b: f64) -> f64 {
    and(implies(a, b), implies(b, a))
}

fn check_p(p: f64) -> Result<()> {
    if p == 0.0 {
        return Err(Error::invalid("p = 0 (geometric mean) is not supported"));
    }
    if !p.is_finite() {
        return Err(Error::invalid("p must be finite"));
    }
    Ok(())
}

/// `((1/n) sum v_i^p)^(1/p)`. For negative `p`, values below
/// [`NEGATIVE_P_FLOOR`] are raised to it.
pub fn pmean(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("p-mean of an empty list"));
    }
    let w = 1.0 / values.len() as f64;
    weighted(values, &vec![w; values.len()], p)
}

/// Weighted p-mean; weights are normalized to sum to one.
pub fn weighted_pmean(values: &[f64], weights: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("p-mean of an empty list"));
    }
    let w = normalize_weights(weights, values.len())?;
    weighted(values, &w, p)
}

pub(crate) fn normalize_weights(weights: &[f64], n: usize) -> Result<Vec<f64>> {
    if weights.len() != n {
        return Err(Error::invalid(format!("{} weights for {n} values", weights.len())));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be finite and >= 0"));
    }
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(Error::invalid("all weights are zero"));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

fn weighted(values: &[f64], w: &[f64], p: f64) -> Result<f64> {
    check_p(p)?;
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::invalid(format!("p-mean input {v} is not a finite value >= 0")));
    }
    let s: f64 = values
        .iter()
        .zip(w)
        .map(|(&v, &wi)| {
            let v = if p < 0.0 { v.max(NEGATIVE_P_FLOOR) } else { v };
            wi * v.powf(p)
        })
        .sum();
    Ok(s.powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmean_examples() {
        assert!((pmean(&[0.2, 0.8], 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((pmean(&[0.1, 0.9], 1000.0).unwrap() - 0.9).abs() < 1e-2);
        for p in [-3.0, 0.5, 2.0, 7.0] {
            assert!((pmean(&[0.37; 5], p).unwrap() - 0.37).abs() < 1e-12);
        }
        assert!(pmean(&[], 1.0).is_err());
        assert!(pmean(&[0.5], 0.0).is_err());
    }

    #[test]
    fn negative_p_tolerates_zeros() {
        let m = pmean(&[0.0, 1.0], -1.0).unwrap();
        assert!(m > 0.0 && m < 1e-11);
    }

    #[test]
    fn weighted_examples() {
        assert!((weighted_pmean(&[0.4, 0.6], &[2.0, 2.0], 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(weighted_pmean(&[0.4, 0.6], &[0.0, 0.0], 1.0).is_err());
    }
}
