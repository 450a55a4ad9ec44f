//! Implicit-midpoint discretization of the Dirichlet-coupled chain.
//!
//! Unknowns are the nodal values at nodes `1..=N`; node 0 carries the inflow
//! of subsystem 1 and is not a state. `∂_ω` is approximated by `D(x, u) =
//! A x + B u`: central differences inside each subdomain, the second-order
//! one-sided quotient at its outflow node, and a ghost value
//! `g_i = x(a_{i-1}) + u_i` (`g_1 = u_1`) wherever a stencil reaches back to
//! the inflow node. One step reads
//!
//! `(I + τc/2 A) x_{k+1} = (I - τc/2 A) x_k - τc B u_k`,
//!
//! with `u_k` the control at the midpoint `t_k + τ/2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{ChainError, Result};
use crate::layout::ChainLayout;
use crate::ocp::banded::{BandLu, BandMatrix};

/// Discrete one-step map and the quadrature weights of the state norm.
#[derive(Debug, Clone)]
pub struct Dynamics {
    n: usize,
    n_channels: usize,
    tau: f64,
    c: f64,
    a: BandMatrix,
    p: BandMatrix,
    q: BandMatrix,
    p_lu: BandLu,
    /// `B` column per channel as `(state index, coefficient)`.
    b: Vec<Vec<(usize, f64)>>,
    weights: Vec<f64>,
}

impl Dynamics {
    /// Builds the scheme for a grid with spacing `h` aligned with `layout`.
    pub fn new(layout: &ChainLayout, h: f64, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(ChainError::BadParam(format!("time step must be > 0, got {tau}")));
        }
        let grid = crate::grid::SpatialGrid::new(layout.length(), h)?;
        let access = grid.access_nodes(layout)?;
        let n = grid.cells();
        let c = layout.velocity();
        let n_channels = layout.n_l();
        let mut a = BandMatrix::zeros(n, 2, 1);
        let mut b: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_channels];
        let inv2h = 0.5 / h;
        // Adds `coef · x_node` to row j, resolving the inflow node of
        // subsystem i into its ghost value.
        let mut put = |a: &mut BandMatrix, j: usize, node: usize, coef: f64, i: usize, inflow: usize| {
            if node == inflow {
                b[i - 1].push((j - 1, coef));
            }
            if node >= 1 {
                a.add(j - 1, node - 1, coef);
            }
        };
        for i in 1..=n_channels {
            let (lo, hi) = (access[i - 1], access[i]);
            for j in lo + 1..=hi {
                if j < hi {
                    put(&mut a, j, j + 1, inv2h, i, lo);
                    put(&mut a, j, j - 1, -inv2h, i, lo);
                } else if hi - lo >= 2 {
                    put(&mut a, j, j, 3.0 * inv2h, i, lo);
                    put(&mut a, j, j - 1, -4.0 * inv2h, i, lo);
                    put(&mut a, j, j - 2, inv2h, i, lo);
                } else {
                    put(&mut a, j, j, 1.0 / h, i, lo);
                    put(&mut a, j, j - 1, -1.0 / h, i, lo);
                }
            }
        }
        let half = 0.5 * tau * c;
        let p = BandMatrix::identity_plus(&a, half);
        let q = BandMatrix::identity_plus(&a, -half);
        let p_lu = p.factor()?;
        let mut weights = vec![h; n];
        weights[n - 1] = 0.5 * h;
        Ok(Self {
            n,
            n_channels,
            tau,
            c,
            a,
            p,
            q,
            p_lu,
            b,
            weights,
        })
    }

    /// Number of state unknowns (grid nodes `1..=N`).
    pub fn n_state(&self) -> usize {
        self.n
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn velocity(&self) -> f64 {
        self.c
    }

    /// Spatial operator `A` (without the `c` factor).
    pub fn a(&self) -> &BandMatrix {
        &self.a
    }

    /// `P = I + τc/2 A`.
    pub fn p(&self) -> &BandMatrix {
        &self.p
    }

    /// `Q = I - τc/2 A`.
    pub fn q(&self) -> &BandMatrix {
        &self.q
    }

    /// Columns of `B`.
    pub fn b_columns(&self) -> &[Vec<(usize, f64)>] {
        &self.b
    }

    /// Trapezoidal weights of `‖x‖²` over nodes `1..=N`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn apply_b(&self, u: &[f64], out: &mut [f64], scale: f64) {
        for (col, &ui) in self.b.iter().zip(u) {
            for &(r, v) in col {
                out[r] += scale * v * ui;
            }
        }
    }

    pub fn apply_bt(&self, y: &[f64]) -> Vec<f64> {
        self.b.iter().map(|col| col.iter().map(|&(r, v)| v * y[r]).sum()).collect()
    }

    /// One implicit-midpoint step.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut rhs = self.q.matvec(x);
        self.apply_b(u, &mut rhs, -self.tau * self.c);
        self.p_lu.solve_in_place(&mut rhs);
        rhs
    }

    /// States `x_0 .. x_K` for midpoint controls `u_0 .. u_{K-1}`.
    pub fn forward(&self, x0: &[f64], controls: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.to_vec());
        for u in controls {
            let next = self.step(states.last().expect("nonempty"), u);
            states.push(next);
        }
        states
    }

    /// Multipliers `λ_0 .. λ_K` of the cost `½ τ Σ θ_k x_kᵀ W x_k`:
    /// `Pᵀ λ_K = -τ θ_K W x_K`, `Pᵀ λ_k = Qᵀ λ_{k+1} - τ θ_k W x_k`.
    pub fn adjoint(&self, states: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let steps = states.len() - 1;
        let mut lambdas = vec![Vec::new(); steps + 1];
        let theta = |k: usize| if k == 0 || k == steps { 0.5 } else { 1.0 };
        let mut next: Option<Vec<f64>> = None;
        for k in (0..=steps).rev() {
            let mut rhs = match &next {
                Some(l) => self.q.matvec_transpose(l),
                None => vec![0.0; self.n],
            };
            let s = self.tau * theta(k);
            for ((r, x), w) in rhs.iter_mut().zip(&states[k]).zip(&self.weights) {
                *r -= s * w * x;
            }
            self.p_lu.solve_transpose_in_place(&mut rhs);
            lambdas[k] = rhs.clone();
            next = Some(rhs);
        }
        lambdas
    }
}

/// One implicit-midpoint step of `∂_t x + c ∂_ω x = 0` on a periodic grid with
/// the central quotient; the update is an isometry of the discrete L² norm.
pub fn periodic_midpoint_step(x: &[f64], h: f64, c: f64, tau: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return Err(ChainError::BadParam("periodic grid needs at least 3 nodes".into()));
    }
    let s = 0.25 * tau * c / h;
    let mut p = DMatrix::<f64>::identity(n, n);
    let mut q = DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        let (right, left) = ((j + 1) % n, (j + n - 1) % n);
        p[(j, right)] += s;
        p[(j, left)] -= s;
        q[(j, right)] -= s;
        q[(j, left)] += s;
    }
    let rhs = q * DVector::from_column_slice(x);
    p.lu()
        .solve(&rhs)
        .map(|v| v.as_slice().to_vec())
        .ok_or(ChainError::SingularSystem {
            row: 0,
            pivot: 0.0,
            threshold: 0.0,
        })
}
