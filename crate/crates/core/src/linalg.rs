//! Dense LU factorization with partial pivoting for the small square
//! systems that thin plate splines produce.

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self {
            n,
            data: rows.concat(),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| (0..self.n).map(|c| self.get(r, c) * x[c]).sum())
            .collect()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|c| (0..self.n).map(|r| self.get(r, c).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `P A = L U`, with `L` unit-lower and `U` upper packed into one matrix.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    anorm: f64,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.size();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|r| (r, lu.get(r, k).abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::IllConditioned(0.0));
            }
            if p != k {
                for c in 0..n {
                    lu.data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let d = lu.get(k, k);
            for r in k + 1..n {
                let f = lu.get(r, k) / d;
                lu.set(r, k, f);
                if f != 0.0 {
                    for c in k + 1..n {
                        let v = lu.get(r, c) - f * lu.get(k, c);
                        lu.set(r, c, v);
                    }
                }
            }
        }
        Ok(Self {
            lu,
            perm,
            anorm: a.norm1(),
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.size();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let s: f64 = (0..r).map(|c| self.lu.get(r, c) * x[c]).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| self.lu.get(r, c) * x[c]).sum();
            x[r] = (x[r] - s) / self.lu.get(r, r);
        }
        x
    }

    /// Solves and applies one step of iterative refinement against `a`.
    pub fn solve_refined(&self, a: &Matrix, b: &[f64]) -> Vec<f64> {
        let mut x = self.solve(b);
        let ax = a.mul_vec(&x);
        let resid: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let dx = self.solve(&resid);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
        x
    }

    /// Reciprocal 1-norm condition number, `1 / (|A|_1 |A^-1|_1)`, from the
    /// explicit inverse. Exact rather than estimated; the systems here are
    /// at most a few dozen rows.
    pub fn rcond(&self) -> f64 {
        let n = self.lu.size();
        let mut inv_norm = 0.0f64;
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = self.solve(&e);
            inv_norm = inv_norm.max(col.iter().map(|v| v.abs()).sum());
        }
        if self.anorm == 0.0 || !inv_norm.is_finite() {
            return 0.0;
        }
        1.0 / (self.anorm * inv_norm)
    }
}
