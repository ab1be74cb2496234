//! Banded matrices with an in-place LU factorization without pivoting.
//!
//! Only used for diagonally dominant systems, where skipping pivoting is
//! stable and keeps the fill inside the band.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row `i` holds columns `i - kl ..= i + ku`.
    data: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Banded { n, kl, ku, data: vec![0.0; n * (kl + ku + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) outside the band");
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            return 0.0;
        }
        self.data[self.slot(i, j)]
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let k = self.slot(i, j);
        self.data[k] += value;
    }

    /// `y = A x`
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Doolittle factorization in place; `L` has a unit diagonal.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        for k in 0..n {
            let pivot = self.data[self.slot(k, k)];
            if !(pivot.abs() > 0.0) || !pivot.is_finite() {
                return Err(Error::Singular("banded factorization hit a zero pivot"));
            }
            let row_end = (k + self.kl).min(n - 1);
            let col_end = (k + self.ku).min(n - 1);
            for i in k + 1..=row_end {
                let ik = self.slot(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=col_end {
                    let kj = self.data[self.slot(k, j)];
                    let ij = self.slot(i, j);
                    self.data[ij] -= l * kj;
                }
            }
        }
        Ok(BandedLu { m: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    m: Banded,
}

impl BandedLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = &self.m;
        let n = m.n;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(m.kl);
            let s: f64 = (lo..i).map(|j| m.data[m.slot(i, j)] * y[j]).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let hi = (i + m.ku).min(n - 1);
            let s: f64 = (i + 1..=hi).map(|j| m.data[m.slot(i, j)] * y[j]).sum();
            y[i] = (y[i] - s) / m.data[m.slot(i, i)];
        }
        y
    }
}
