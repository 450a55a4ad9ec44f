//! Banded matrices and their LU factorization with partial pivoting.

// Index loops mirror the textbook band LU; iterator forms obscure the bands.
#![allow(clippy::needless_range_loop)]

use crate::error::{ChainError, Result};

/// Square matrix with `kl` sub- and `ku` superdiagonals, stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    /// Identity plus `s` times `other` (same band shape).
    pub fn identity_plus(other: &BandMatrix, s: f64) -> Self {
        let mut m = other.clone();
        m.data.iter_mut().for_each(|v| *v *= s);
        for r in 0..m.n {
            m.add(r, r, 1.0);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn slot(&self, r: usize, c: usize) -> Option<usize> {
        if r >= self.n || c >= self.n || c + self.kl < r || c > r + self.ku {
            return None;
        }
        Some(r * (self.kl + self.ku + 1) + (c + self.kl - r))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.slot(r, c).map_or(0.0, |s| self.data[s])
    }

    /// Adds `v` at `(r, c)`; panics outside the band.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let s = self
            .slot(r, c)
            .unwrap_or_else(|| panic!("({r}, {c}) outside band ({}, {})", self.kl, self.ku));
        self.data[s] += v;
    }

    /// Nonzero entries of row `r` as `(column, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = r.saturating_sub(self.kl);
        let hi = (r + self.ku).min(self.n - 1);
        (lo..=hi).map(move |c| (c, self.get(r, c))).filter(|(_, v)| *v != 0.0)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn matvec_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                out[c] += v * y[r];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Gaussian elimination with partial pivoting inside the band. Pivots
    /// below `1e-14 · max|A|` are reported as singular.
    pub fn factor(&self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        // Row swaps widen the upper band to kl + ku.
        let ku = self.kl + self.ku;
        let width = kl + ku + 1;
        let mut u = vec![0.0; n * width];
        let at = |r: usize, c: usize| r * width + (c + kl - r);
        for r in 0..n {
            for (c, v) in self.row(r) {
                u[at(r, c)] = v;
            }
        }
        let mut lower = vec![0.0; n * kl.max(1)];
        let mut piv = vec![0usize; n];
        let threshold = 1e-14 * self.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = u[at(k, k)].abs();
            for r in k + 1..=last_row {
                let v = u[at(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best < threshold || !best.is_finite() {
                return Err(ChainError::SingularSystem {
                    row: k,
                    pivot: best,
                    threshold,
                });
            }
            piv[k] = p;
            let last_col = (k + ku).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    u.swap(at(k, c), at(p, c));
                }
            }
            let pivot = u[at(k, k)];
            for r in k + 1..=last_row {
                let m = u[at(r, k)] / pivot;
                lower[k * kl + (r - k - 1)] = m;
                u[at(r, k)] = 0.0;
                if m != 0.0 {
                    for c in k + 1..=last_col {
                        u[at(r, c)] -= m * u[at(k, c)];
                    }
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            ku,
            u,
            lower,
            piv,
        })
    }
}

/// `PA = LU` for a [`BandMatrix`], with `L` kept as per-column multipliers
/// interleaved with the row swaps.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    u: Vec<f64>,
    lower: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn at(&self, r: usize, c: usize) -> usize {
        r * (self.kl + self.ku + 1) + (c + self.kl - r)
    }

    fn mult(&self, k: usize, m: usize) -> f64 {
        self.lower[k * self.kl + m]
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl) = (self.n, self.kl);
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + kl).min(n - 1) {
                    b[r] -= self.mult(k, r - k - 1) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..=(k + self.ku).min(n - 1) {
                s -= self.u[self.at(k, c)] * b[c];
            }
            b[k] = s / self.u[self.at(k, k)];
        }
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let (n, kl) = (self.n, self.kl);
        for k in 0..n {
            let mut s = b[k];
            for r in k.saturating_sub(self.ku)..k {
                s -= self.u[self.at(r, k)] * b[r];
            }
            b[k] = s / self.u[self.at(k, k)];
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for r in k + 1..=(k + kl).min(n - 1) {
                s -= self.mult(k, r - k - 1) * b[r];
            }
            b[k] = s;
            b.swap(k, self.piv[k]);
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_transpose_in_place(&mut x);
        x
    }
}
