//! Discretize-then-optimize LQ optimal control of the Dirichlet chain.
//!
//! Minimizes `J(u) = ½ ∫₀ᵀ ‖x(t)‖² dt + (α/2) ∫₀ᵀ |u(t)|² dt` subject to the
//! implicit-midpoint scheme of [`dynamics`]. The state integral uses the time
//! trapezoid and the spatial trapezoid over nodes `1..=N`; the control integral
//! is the midpoint rule.
//!
//! The KKT system is solved by conjugate gradients on the reduced Hessian,
//! applied matrix-free through one forward and one adjoint sweep, each a banded
//! LU solve per step. The assembled system is kept to report the residual of
//! the returned triple, and a dense LU path serves as an oracle on small cases.

pub mod banded;
pub mod dynamics;
pub mod kkt;
pub mod sparse;

use crate::error::{ChainError, Result};
use crate::grid::{ControlSignal, StateField, TimeGrid, Trajectory};
use crate::layout::ChainLayout;

pub use dynamics::{periodic_midpoint_step, Dynamics};
pub use kkt::KktSystem;

/// Default entry budget for the KKT system and trajectories.
pub const DEFAULT_MEMORY_BUDGET: usize = 400_000_000;

/// Parameters of one optimal control problem.
#[derive(Debug, Clone)]
pub struct OcpConfig {
    pub layout: ChainLayout,
    pub x0: StateField,
    pub horizon: f64,
    pub alpha: f64,
    pub tau: f64,
    /// Relative tolerance on the reduced gradient.
    pub cg_tol: f64,
    pub max_iter: usize,
    pub memory_budget: usize,
}

impl OcpConfig {
    pub fn new(layout: ChainLayout, x0: StateField, horizon: f64, alpha: f64, tau: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ChainError::BadParam(format!("α must be > 0, got {alpha}")));
        }
        let grid = TimeGrid::covering(horizon, tau)?;
        if (x0.grid().length() - layout.length()).abs() > 1e-12 * layout.length().max(1.0) {
            return Err(ChainError::BadParam(format!(
                "initial data covers [0, {}] but layout has L = {}",
                x0.grid().length(),
                layout.length()
            )));
        }
        x0.grid().access_nodes(&layout)?;
        Ok(Self {
            layout,
            x0,
            horizon,
            alpha,
            tau: grid.tau,
            cg_tol: 1e-13,
            max_iter: 5000,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        })
    }

    /// `τ = h / c`.
    pub fn unit_cfl(layout: ChainLayout, x0: StateField, horizon: f64, alpha: f64) -> Result<Self> {
        let tau = x0.grid().h() / layout.velocity();
        Self::new(layout, x0, horizon, alpha, tau)
    }

    pub fn h(&self) -> f64 {
        self.x0.grid().h()
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::covering(self.horizon, self.tau).expect("validated in new")
    }

    pub fn steps(&self) -> usize {
        self.time_grid().steps
    }

    /// Zero control on the midpoint grid `t_k + τ/2`.
    pub fn zero_control(&self) -> ControlSignal {
        let n = self.layout.n_l();
        ControlSignal::new(0.5 * self.tau, self.tau, vec![vec![0.0; self.steps()]; n]).expect("finite zeros")
    }
}

/// Optimal state, costate and control with diagnostics.
#[derive(Debug, Clone)]
pub struct OcpSolution {
    /// States at `t_0 .. t_K`; node 0 shows the inflow `u_1`.
    pub state: Trajectory,
    /// Costate `λ_k / w_j` at `t_0 .. t_K`.
    pub costate: Trajectory,
    /// Controls at the midpoints `t_k + τ/2`.
    pub control: ControlSignal,
    pub cost: f64,
    /// `½ ∫ ‖x‖²`.
    pub tracking: f64,
    /// `∫ |u|²`.
    pub control_energy: f64,
    /// `‖K z - b‖ / ‖b‖` of the assembled KKT system.
    pub residual: f64,
    pub iterations: usize,
}

/// Builds the implicit-midpoint one-step map for `config`.
pub fn discretize_dynamics(config: &OcpConfig) -> Result<Dynamics> {
    Dynamics::new(&config.layout, config.h(), config.tau)
}

/// Assembles the KKT system for `config`.
pub fn assemble_kkt(config: &OcpConfig) -> Result<KktSystem> {
    let problem = Problem::new(config)?;
    kkt::assemble(&problem.dynamics, &problem.x0, problem.steps, config.alpha, config.memory_budget)
}

struct Problem<'a> {
    config: &'a OcpConfig,
    dynamics: Dynamics,
    x0: Vec<f64>,
    steps: usize,
}

impl<'a> Problem<'a> {
    fn new(config: &'a OcpConfig) -> Result<Self> {
        let steps = config.steps();
        let n = config.x0.grid().cells();
        let m = config.layout.n_l();
        let requested = kkt::kkt_footprint(n, m, steps);
        if requested > config.memory_budget {
            return Err(ChainError::OutOfMemory {
                requested,
                budget: config.memory_budget,
            });
        }
        Ok(Self {
            config,
            dynamics: discretize_dynamics(config)?,
            x0: config.x0.values()[1..].to_vec(),
            steps,
        })
    }

    fn unpack(&self, u: &ControlSignal) -> Result<Vec<Vec<f64>>> {
        let m = self.dynamics.n_channels();
        if u.n_channels() != m || u.len() != self.steps || (u.tau() - self.config.tau).abs() > 1e-12 * self.config.tau {
            return Err(ChainError::GridMismatch {
                expected: self.steps * m,
                got: u.len() * u.n_channels(),
            });
        }
        Ok((0..self.steps).map(|k| (1..=m).map(|i| u.channel(i)[k]).collect()).collect())
    }

    fn pack(&self, controls: &[Vec<f64>]) -> ControlSignal {
        let m = self.dynamics.n_channels();
        let channels = (0..m).map(|i| controls.iter().map(|u| u[i]).collect()).collect();
        ControlSignal::new(0.5 * self.config.tau, self.config.tau, channels).expect("finite controls")
    }

    /// `(½ ∫‖x‖², ∫|u|²)` along the trajectory from `x0`.
    fn cost_terms(&self, states: &[Vec<f64>], controls: &[Vec<f64>]) -> (f64, f64) {
        let tau = self.config.tau;
        let w = self.dynamics.weights();
        let tracking: f64 = states
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let theta = if k == 0 || k == self.steps { 0.5 } else { 1.0 };
                theta * x.iter().zip(w).map(|(v, w)| w * v * v).sum::<f64>()
            })
            .sum::<f64>()
            * 0.5
            * tau;
        let energy: f64 = controls.iter().flatten().map(|v| v * v).sum::<f64>() * tau;
        (tracking, energy)
    }

    /// Euclidean gradient of `J` in the stacked controls: `α τ u_k + τ c Bᵀ λ_{k+1}`.
    fn gradient(&self, x0: &[f64], controls: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let states = self.dynamics.forward(x0, controls);
        let lambdas = self.dynamics.adjoint(&states);
        let tau = self.config.tau;
        let tc = tau * self.dynamics.velocity();
        controls
            .iter()
            .enumerate()
            .map(|(k, u)| {
                let bt = self.dynamics.apply_bt(&lambdas[k + 1]);
                u.iter().zip(bt).map(|(ui, b)| self.config.alpha * tau * ui + tc * b).collect()
            })
            .collect()
    }

    fn conjugate_gradient(&self) -> Result<(Vec<Vec<f64>>, usize)> {
        let m = self.dynamics.n_channels();
        let zero_ctrl = vec![vec![0.0; m]; self.steps];
        let zero_state = vec![0.0; self.x0.len()];
        let b: Vec<f64> = self.gradient(&self.x0, &zero_ctrl).into_iter().flatten().map(|v| -v).collect();
        let norm_b = dot(&b, &b).sqrt();
        let mut u = vec![0.0; b.len()];
        if norm_b == 0.0 {
            return Ok((zero_ctrl, 0));
        }
        let hess = |v: &[f64]| -> Vec<f64> {
            let ctrl: Vec<Vec<f64>> = v.chunks(m).map(|c| c.to_vec()).collect();
            self.gradient(&zero_state, &ctrl).into_iter().flatten().collect()
        };
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let target = self.config.cg_tol * norm_b;
        for it in 1..=self.config.max_iter {
            let hp = hess(&p);
            let step = rr / dot(&p, &hp);
            for ((ui, ri), (pi, hi)) in u.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&hp)) {
                *ui += step * pi;
                *ri -= step * hi;
            }
            let rr_new = dot(&r, &r);
            if rr_new.sqrt() <= target {
                return Ok((u.chunks(m).map(|c| c.to_vec()).collect(), it));
            }
            let beta = rr_new / rr;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
            rr = rr_new;
        }
        Err(ChainError::NotConverged {
            iterations: self.config.max_iter,
            residual: rr.sqrt() / norm_b,
        })
    }

    fn solution(&self, controls: Vec<Vec<f64>>, iterations: usize) -> Result<OcpSolution> {
        let states = self.dynamics.forward(&self.x0, &controls);
        let lambdas = self.dynamics.adjoint(&states);
        let system = kkt::assemble(&self.dynamics, &self.x0, self.steps, self.config.alpha, self.config.memory_budget)?;
        let residual = system.relative_residual(&system.pack(&states, &lambdas, &controls));
        let (tracking, control_energy) = self.cost_terms(&states, &controls);
        let control = self.pack(&controls);
        let grid = *self.config.x0.grid();
        let times = self.config.time_grid().times();
        let inflow0 = self.config.x0.values()[0];
        let state_fields = states
            .iter()
            .zip(&times)
            .map(|(x, &t)| {
                let head = if t == 0.0 { inflow0 } else { control.value(1, t) };
                StateField::new(grid, std::iter::once(head).chain(x.iter().copied()).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let w = self.dynamics.weights();
        let costate_fields = lambdas
            .iter()
            .map(|l| StateField::new(grid, std::iter::once(0.0).chain(l.iter().zip(w).map(|(v, w)| v / w)).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(OcpSolution {
            state: Trajectory::new(times.clone(), state_fields, Some(control.clone()))?,
            costate: Trajectory::new(times, costate_fields, None)?,
            control,
            cost: tracking + 0.5 * self.config.alpha * control_energy,
            tracking,
            control_energy,
            residual,
            iterations,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the optimal control problem.
pub fn solve(config: &OcpConfig) -> Result<OcpSolution> {
    let problem = Problem::new(config)?;
    let (controls, iterations) = problem.conjugate_gradient()?;
    problem.solution(controls, iterations)
}

/// Solves the assembled KKT system by dense LU; for small problems only.
pub fn solve_dense(config: &OcpConfig) -> Result<OcpSolution> {
    let problem = Problem::new(config)?;
    let system = kkt::assemble(&problem.dynamics, &problem.x0, problem.steps, config.alpha, config.memory_budget)?;
    let z = kkt::solve_dense(&system, config.memory_budget)?;
    let m = problem.dynamics.n_channels();
    let controls = (0..problem.steps)
        .map(|k| (0..m).map(|i| z[system.u_index(k, i)]).collect())
        .collect();
    problem.solution(controls, 0)
}

/// Discrete cost `J(u)`.
pub fn cost(config: &OcpConfig, u: &ControlSignal) -> Result<f64> {
    let problem = Problem::new(config)?;
    let controls = problem.unpack(u)?;
    let states = problem.dynamics.forward(&problem.x0, &controls);
    let (tracking, energy) = problem.cost_terms(&states, &controls);
    Ok(tracking + 0.5 * config.alpha * energy)
}

/// `L²(0,T)` representative of `∇J(u)`: `α u_k + c Bᵀ λ_{k+1}`, so that
/// `dJ(u)[δ] = τ Σ_k ∇J_k · δ_k`.
pub fn reduced_gradient(config: &OcpConfig, u: &ControlSignal) -> Result<ControlSignal> {
    let problem = Problem::new(config)?;
    let controls = problem.unpack(u)?;
    let g: Vec<Vec<f64>> = problem
        .gradient(&problem.x0, &controls)
        .into_iter()
        .map(|row| row.into_iter().map(|v| v / config.tau).collect())
        .collect();
    Ok(problem.pack(&g))
}

/// `τ Σ_k a_k · b_k` for signals on the same midpoint grid.
pub fn control_inner(a: &ControlSignal, b: &ControlSignal) -> f64 {
    a.channels()
        .iter()
        .zip(b.channels())
        .map(|(x, y)| dot(x, y))
        .sum::<f64>()
        * a.tau()
}
