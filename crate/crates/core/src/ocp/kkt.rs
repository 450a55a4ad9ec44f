//! Symmetric saddle-point system of the discrete LQ problem.
//!
//! Unknowns are ordered `z = [x_1 .. x_K, λ_1 .. λ_K, u_0 .. u_{K-1}]` with
//! rows
//!
//! - `x_k`: `τ θ_k W x_k + Pᵀ λ_k - Qᵀ λ_{k+1} = 0`,
//! - `λ_k`: `P x_k - Q x_{k-1} + τ c B u_{k-1} = 0` (`Q x_0` moved to the right),
//! - `u_k`: `α τ u_k + τ c Bᵀ λ_{k+1} = 0`.

use nalgebra::DVector;

use crate::error::{ChainError, Result};
use crate::ocp::dynamics::Dynamics;
use crate::ocp::sparse::CsrMatrix;

/// KKT matrix, right-hand side and the block layout of the unknowns.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n_state: usize,
    pub n_channels: usize,
    pub steps: usize,
}

impl KktSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn x_index(&self, k: usize, j: usize) -> usize {
        (k - 1) * self.n_state + j
    }

    pub fn lambda_index(&self, k: usize, j: usize) -> usize {
        self.steps * self.n_state + (k - 1) * self.n_state + j
    }

    pub fn u_index(&self, k: usize, i: usize) -> usize {
        2 * self.steps * self.n_state + k * self.n_channels + i
    }

    /// `‖K z - b‖ / ‖b‖` (absolute when `b = 0`).
    pub fn relative_residual(&self, z: &[f64]) -> f64 {
        let kz = self.matrix.matvec(z);
        let r: f64 = kz.iter().zip(&self.rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let b: f64 = self.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if b > 0.0 {
            r / b
        } else {
            r
        }
    }

    /// Packs per-level states, multipliers and controls into `z`.
    pub fn pack(&self, states: &[Vec<f64>], lambdas: &[Vec<f64>], controls: &[Vec<f64>]) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        for x in &states[1..] {
            z.extend_from_slice(x);
        }
        for l in &lambdas[1..] {
            z.extend_from_slice(l);
        }
        for u in controls {
            z.extend_from_slice(u);
        }
        z
    }
}

/// Rough number of stored entries needed by the KKT matrix and its vectors.
pub fn kkt_footprint(n_state: usize, n_channels: usize, steps: usize) -> usize {
    let dim = steps * (2 * n_state + n_channels);
    let nnz = steps * n_state * 20 + steps * n_channels * 8;
    dim.saturating_mul(4).saturating_add(nnz.saturating_mul(2))
}

/// Assembles the KKT system for `steps` midpoint steps from `x0`.
pub fn assemble(dynamics: &Dynamics, x0: &[f64], steps: usize, alpha: f64, budget: usize) -> Result<KktSystem> {
    let n = dynamics.n_state();
    let m = dynamics.n_channels();
    let requested = kkt_footprint(n, m, steps);
    if requested > budget {
        return Err(ChainError::OutOfMemory { requested, budget });
    }
    let sys = KktSystem {
        matrix: CsrMatrix::from_triplets(0, 0, Vec::new()),
        rhs: Vec::new(),
        n_state: n,
        n_channels: m,
        steps,
    };
    let tau = dynamics.tau();
    let tc = tau * dynamics.velocity();
    let (p, q) = (dynamics.p(), dynamics.q());
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(requested / 2);
    let mut sym = |r: usize, c: usize, v: f64| {
        t.push((r, c, v));
        if r != c {
            t.push((c, r, v));
        }
    };
    for k in 1..=steps {
        let theta = if k == steps { 0.5 } else { 1.0 };
        for (j, w) in dynamics.weights().iter().enumerate() {
            sym(sys.x_index(k, j), sys.x_index(k, j), tau * theta * w);
        }
        for r in 0..n {
            for (c, v) in p.row(r) {
                sym(sys.lambda_index(k, r), sys.x_index(k, c), v);
            }
            if k >= 2 {
                for (c, v) in q.row(r) {
                    sym(sys.lambda_index(k, r), sys.x_index(k - 1, c), -v);
                }
            }
        }
        for (i, col) in dynamics.b_columns().iter().enumerate() {
            for &(r, v) in col {
                sym(sys.lambda_index(k, r), sys.u_index(k - 1, i), tc * v);
            }
            sym(sys.u_index(k - 1, i), sys.u_index(k - 1, i), alpha * tau);
        }
    }
    let dim = steps * (2 * n + m);
    let mut rhs = vec![0.0; dim];
    for (r, v) in q.matvec(x0).into_iter().enumerate() {
        rhs[sys.lambda_index(1, r)] = v;
    }
    Ok(KktSystem {
        matrix: CsrMatrix::from_triplets(dim, dim, t),
        rhs,
        ..sys
    })
}

/// Dense LU solve of the full system; a small-size oracle for the iterative
/// path. Reports the smallest relative pivot of `U` when it is negligible.
pub fn solve_dense(system: &KktSystem, budget: usize) -> Result<Vec<f64>> {
    let dim = system.dim();
    let requested = dim.saturating_mul(dim);
    if requested > budget {
        return Err(ChainError::OutOfMemory { requested, budget });
    }
    let dense = system.matrix.to_dense();
    let scale = dense.amax().max(f64::MIN_POSITIVE);
    let lu = dense.lu();
    let threshold = 1e-13 * scale;
    let diag = lu.u().diagonal();
    if let Some((row, pivot)) = diag
        .iter()
        .enumerate()
        .map(|(r, v)| (r, v.abs()))
        .find(|(_, v)| *v < threshold || !v.is_finite())
    {
        return Err(ChainError::SingularSystem { row, pivot, threshold });
    }
    let z = lu
        .solve(&DVector::from_column_slice(&system.rhs))
        .ok_or(ChainError::SingularSystem {
            row: 0,
            pivot: 0.0,
            threshold,
        })?;
    Ok(z.as_slice().to_vec())
}
