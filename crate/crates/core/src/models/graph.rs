//! Scale-free graphs with preferential attachment.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A graph sample for graph-convolution models.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInstance {
    pub n: usize,
    /// Symmetric 0/1 matrix with zero diagonal.
    pub adjacency: Tensor,
    /// `D^-1/2 (A + I) D^-1/2` with `D` the degree matrix of `A + I`.
    pub laplacian: Tensor,
    /// Per node: `[1, degree / max_degree]`.
    pub features: Tensor,
    /// Growth factor `m` the graph was generated with.
    pub label: usize,
}

impl GraphInstance {
    pub fn from_edges(n: usize, edges: &[(usize, usize)], label: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let mut adj = vec![0.0; n * n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) references a missing node")));
            }
            if a == b {
                return Err(Error::invalid(format!("self loop on node {a}")));
            }
            adj[a * n + b] = 1.0;
            adj[b * n + a] = 1.0;
        }
        let degree: Vec<f64> = (0..n).map(|i| adj[i * n..(i + 1) * n].iter().sum()).collect();
        let mut lap = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let a = adj[i * n + j] + if i == j { 1.0 } else { 0.0 };
                if a != 0.0 {
                    lap[i * n + j] = a / ((degree[i] + 1.0) * (degree[j] + 1.0)).sqrt();
                }
            }
        }
        let max_deg = degree.iter().cloned().fold(0.0, f64::max).max(1.0);
        let mut feats = Vec::with_capacity(2 * n);
        for d in &degree {
            feats.push(1.0);
            feats.push(d / max_deg);
        }
        Ok(Self {
            n,
            adjacency: Tensor::from_parts(vec![n, n], adj),
            laplacian: Tensor::from_parts(vec![n, n], lap),
            features: Tensor::from_parts(vec![n, 2], feats),
            label,
        })
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency.row(i).iter().filter(|&&v| v != 0.0).count()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.adjacency.get(&[i, j]) != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// `xattr-graph 1`, then `nodes n`, `label m` and one `edge a b` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::from("xattr-graph 1\n");
        writeln!(s, "nodes {}", self.n).unwrap();
        writeln!(s, "label {}", self.label).unwrap();
        for (a, b) in self.edges() {
            writeln!(s, "edge {a} {b}").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut n = None;
        let mut label = 0;
        let mut edges = Vec::new();
        let mut seen_header = false;
        for (i, raw) in text.lines().enumerate() {
            let no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if !seen_header {
                if parts != ["xattr-graph", "1"] {
                    return Err(Error::parse(no, 1, "expected `xattr-graph 1` header"));
                }
                seen_header = true;
                continue;
            }
            let num = |k: usize| -> Result<usize> {
                parts
                    .get(k)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::parse(no, 1, format!("`{}` needs integer arguments", parts[0])))
            };
            match parts[0] {
                "nodes" => n = Some(num(1)?),
                "label" => label = num(1)?,
                "edge" => edges.push((num(1)?, num(2)?)),
                other => return Err(Error::parse(no, 1, format!("unknown directive {other:?}"))),
            }
        }
        let n = n.ok_or_else(|| Error::parse(1, 1, "missing `nodes` line"))?;
        Self::from_edges(n, &edges, label)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Barabási–Albert graph: a clique on `m + 1` nodes, then every new node
/// links to `m` distinct existing nodes chosen with probability
/// proportional to their degree.
pub fn barabasi_albert(n: usize, m: usize, seed: u64) -> Result<GraphInstance> {
    if m == 0 || m >= n {
        return Err(Error::invalid(format!("need 1 <= m < n, got m = {m}, n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(m * n);
    // one entry per edge endpoint, so uniform picks are degree-proportional
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * m * n);
    for a in 0..=m {
        for b in a + 1..=m {
            edges.push((a, b));
            endpoints.push(a);
            endpoints.push(b);
        }
    }
    // m = 1 starts from a single edge, every later node joins the tree
    let mut targets = Vec::with_capacity(m);
    for v in m + 1..n {
        targets.clear();
        while targets.len() < m {
            let t = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((t, v));
            endpoints.push(t);
            endpoints.push(v);
        }
    }
    GraphInstance::from_edges(n, &edges, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_triangle() {
        let g = barabasi_albert(3, 2, 7).unwrap();
        assert_eq!(g.edges(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn m1_is_a_tree() {
        for seed in 0..20 {
            assert_eq!(barabasi_albert(10, 1, seed).unwrap().edge_count(), 9);
        }
    }

    #[test]
    fn rejects_m_at_least_n() {
        assert!(barabasi_albert(3, 3, 0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let g = barabasi_albert(12, 2, 5).unwrap();
        assert_eq!(GraphInstance::parse(&g.to_text()).unwrap(), g);
    }
}
