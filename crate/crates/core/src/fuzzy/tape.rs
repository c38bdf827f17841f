//! Scalar reverse-mode tape for truth degrees.

use super::semantics::{self, NEGATIVE_P_FLOOR};
use crate::error::Result;

#[derive(Default)]
pub(crate) struct Tape {
    values: Vec<f64>,
    // (parent, d self / d parent)
    parents: Vec<Vec<(usize, f64)>>,
}

impl Tape {
    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    fn push(&mut self, v: f64, parents: Vec<(usize, f64)>) -> usize {
        self.values.push(v);
        self.parents.push(parents);
        self.values.len() - 1
    }

    pub fn constant(&mut self, v: f64) -> usize {
        self.push(v, Vec::new())
    }

    pub fn not(&mut self, a: usize) -> usize {
        let va = self.values[a];
        self.push(semantics::not(va), vec![(a, -1.0)])
    }

    pub fn and(&mut self, a: usize, b: usize) -> usize {
        let (va, vb) = (self.values[a], self.values[b]);
        self.push(semantics::and(va, vb), vec![(a, vb), (b, va)])
    }

    pub fn or(&mut self, a: usize, b: usize) -> usize {
        let (va, vb) = (self.values[a], self.values[b]);
        self.push(semantics::or(va, vb), vec![(a, 1.0 - vb), (b, 1.0 - va)])
    }

    pub fn implies(&mut self, a: usize, b: usize) -> usize {
        let (va, vb) = (self.values[a], self.values[b]);
        self.push(semantics::implies(va, vb), vec![(a, vb - 1.0), (b, va)])
    }

    pub fn equiv(&mut self, a: usize, b: usize) -> usize {
        let ab = self.implies(a, b);
        let ba = self.implies(b, a);
        self.and(ab, ba)
    }

    /// `a / b`, with `b > 0`.
    pub fn div(&mut self, a: usize, b: usize) -> usize {
        let (va, vb) = (self.values[a], self.values[b]);
        self.push(va / vb, vec![(a, 1.0 / vb), (b, -va / (vb * vb))])
    }

    /// Larger operand; ties pick `a`.
    pub fn max(&mut self, a: usize, b: usize) -> usize {
        let (va, vb) = (self.values[a], self.values[b]);
        if va >= vb {
            self.push(va, vec![(a, 1.0)])
        } else {
            self.push(vb, vec![(b, 1.0)])
        }
    }

    pub fn mean(&mut self, xs: &[usize]) -> usize {
        let w = 1.0 / xs.len() as f64;
        let v = xs.iter().map(|&i| self.values[i]).sum::<f64>() * w;
        self.push(v, xs.iter().map(|&i| (i, w)).collect())
    }

    pub fn pmean(&mut self, xs: &[usize], p: f64) -> Result<usize> {
        let w = vec![1.0 / xs.len().max(1) as f64; xs.len()];
        self.weighted_pmean(xs, &w, p)
    }

    /// `weights` must already be normalized.
    pub fn weighted_pmean(&mut self, xs: &[usize], weights: &[f64], p: f64) -> Result<usize> {
        let vals: Vec<f64> = xs.iter().map(|&i| self.values[i]).collect();
        let m = semantics::weighted_pmean(&vals, weights, p)?;
        let parents = xs
            .iter()
            .zip(&vals)
            .zip(weights)
            .map(|((&i, &v), &w)| {
                let d = if p < 0.0 && v < NEGATIVE_P_FLOOR {
                    0.0
                } else if m == 0.0 {
                    // one-sided derivative at the all-zero point
                    w.powf(1.0 / p)
                } else {
                    w * v.powf(p - 1.0) * m.powf(1.0 - p)
                };
                (i, d)
            })
            .collect();
        Ok(self.push(m, parents))
    }

    /// Adjoints of every node with respect to `out`.
    pub fn gradient(&self, out: usize) -> Vec<f64> {
        let mut adj = vec![0.0; self.values.len()];
        adj[out] = 1.0;
        for i in (0..=out).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            for &(p, d) in &self.parents[i] {
                adj[p] += a * d;
            }
        }
        adj
    }
}
