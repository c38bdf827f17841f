//! Small dense LU factorization for determinant and inverse.

/// LU factorization with partial pivoting of an `n x n` row-major matrix.
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    pub fn new(a: &[f64], n: usize) -> Self {
        assert_eq!(a.len(), n * n);
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for r in k + 1..n {
                let v = lu[r * n + k].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[k * n + k];
            for r in k + 1..n {
                let f = lu[r * n + k] / pivot;
                lu[r * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu[r * n + c] -= f * lu[k * n + c];
                    }
                }
            }
        }
        Self {
            n,
            lu,
            perm,
            sign,
            singular,
        }
    }

    pub fn det(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        (0..self.n).fold(self.sign, |acc, i| acc * self.lu[i * self.n + i])
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Solves `A x = b`; `None` when singular.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        if self.singular {
            return None;
        }
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        Some(x)
    }

    /// Row-major inverse; `None` when singular.
    pub fn inverse(&self) -> Option<Vec<f64>> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = self.solve(&e)?;
            for r in 0..n {
                inv[r * n + c] = col[r];
            }
        }
        Some(inv)
    }
}

pub fn det(a: &[f64], n: usize) -> f64 {
    Lu::new(a, n).det()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_needs_pivot() {
        // zero leading entry forces a row swap
        let a = [0.0, 2.0, 3.0, 1.0];
        assert!((det(&a, 2) - (-6.0)).abs() < 1e-15);
    }

    #[test]
    fn inverse_round_trip() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = Lu::new(&a, 3).inverse().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrix() {
        let lu = Lu::new(&[1.0, 1.0, 1.0, 1.0], 2);
        assert_eq!(lu.det(), 0.0);
        assert!(lu.inverse().is_none());
    }
}
