//! Grid-sampled mild solutions of the open-loop chain.
//!
//! Values are obtained by following characteristics backwards: a point of
//! subsystem `i` that has been reached by the inflow at `a_{i-1}` carries the
//! inflow value at the retarded time `s = t - (ω - a_{i-1})/c`; every other
//! point carries the initial data shifted by `ct`.
//!
//! With `cτ = h` and access points on grid nodes every retarded time is a
//! sample time, so the sampled solution is exact. Off-grid queries interpolate
//! linearly in time and space.

use serde::{Deserialize, Serialize};

use crate::error::{ChainError, Result};
use crate::grid::{sample_linear, ControlSignal, StateField, Trajectory, ALIGN_TOL};
use crate::layout::ChainLayout;
use crate::norms::derivative_slice;

/// Coupling condition at the access points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// `x_i(a_{i-1}, t) = x_{i-1}(a_{i-1}, t) + u_i(t)`.
    Dirichlet,
    /// `∂_ω x_i(a_{i-1}, t) = ∂_ω x_{i-1}(a_{i-1}, t) + u_i(t)`.
    Neumann,
}

impl Coupling {
    pub fn name(self) -> &'static str {
        match self {
            Coupling::Dirichlet => "dirichlet",
            Coupling::Neumann => "neumann",
        }
    }
}

/// Open-loop chain: layout, initial data, coupling and a given control.
#[derive(Debug, Clone)]
pub struct OpenLoopProblem {
    layout: ChainLayout,
    x0: StateField,
    coupling: Coupling,
    control: ControlSignal,
}

impl OpenLoopProblem {
    pub fn new(
        layout: ChainLayout,
        x0: StateField,
        coupling: Coupling,
        control: ControlSignal,
    ) -> Result<Self> {
        let tol = ALIGN_TOL * layout.length().max(1.0);
        if (x0.grid().length() - layout.length()).abs() > tol {
            return Err(ChainError::BadParam(format!(
                "initial data covers [0, {}] but layout has L = {}",
                x0.grid().length(),
                layout.length()
            )));
        }
        if control.n_channels() != layout.n_l() {
            return Err(ChainError::BadParam(format!(
                "control has {} channels, layout has {} access points",
                control.n_channels(),
                layout.n_l()
            )));
        }
        if coupling == Coupling::Neumann {
            let d = derivative_slice(x0.values(), x0.grid().h());
            if d.iter().any(|v| !v.is_finite()) {
                return Err(ChainError::BadInitialData("initial data has no finite H¹ norm".into()));
            }
        }
        Ok(Self {
            layout,
            x0,
            coupling,
            control,
        })
    }

    pub fn layout(&self) -> &ChainLayout {
        &self.layout
    }

    pub fn x0(&self) -> &StateField {
        &self.x0
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn control(&self) -> &ControlSignal {
        &self.control
    }
}

/// Geometry shared by the trace-back evaluators: `a_0 .. a_{N_L}` with the
/// last point clipped to `L`.
#[derive(Debug, Clone)]
pub(crate) struct Chain {
    pub points: Vec<f64>,
    pub c: f64,
    pub tol: f64,
}

impl Chain {
    pub fn new(layout: &ChainLayout) -> Self {
        let n = layout.n_l();
        let mut points = layout.access_points()[..=n].to_vec();
        points[n] = layout.length();
        Self {
            points,
            c: layout.velocity(),
            tol: ALIGN_TOL * layout.length().max(1.0),
        }
    }

    pub fn n(&self) -> usize {
        self.points.len() - 1
    }

    /// Half-open membership `(a_{i-1}, a_i]`, tolerant to grid round-off.
    pub fn subdomain_of(&self, omega: f64) -> usize {
        let inner = &self.points[1..self.n()];
        1 + inner.partition_point(|&a| a < omega - self.tol)
    }

    pub fn left(&self, i: usize) -> f64 {
        self.points[i - 1]
    }

    pub fn right(&self, i: usize) -> f64 {
        self.points[i]
    }

    /// Retarded time of `ω` in subsystem `i`, if the inflow has reached it by `t`.
    pub fn retarded(&self, i: usize, omega: f64, t: f64) -> Option<f64> {
        let d = omega - self.left(i);
        if d <= self.c * t + self.tol {
            Some((t - d / self.c).max(0.0))
        } else {
            None
        }
    }
}

/// Uncontrolled solution on the whole domain `(0, L)`: pure transport with
/// zero inflow (Dirichlet) or constant extension of `x₀(0)` (Neumann).
pub fn autonomous_solution(x0: &StateField, t: f64, coupling: Coupling) -> Result<StateField> {
    if t < 0.0 || !t.is_finite() {
        return Err(ChainError::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(x0.clone());
    }
    let grid = *x0.grid();
    let c = 1.0;
    let shift = t * c;
    let tol = ALIGN_TOL * grid.length().max(1.0);
    let inflow = match coupling {
        Coupling::Dirichlet => 0.0,
        Coupling::Neumann => x0.values()[0],
    };
    StateField::from_fn(grid, |w| if w <= shift + tol { inflow } else { x0.sample(w - shift) })
}

/// [`autonomous_solution`] with an explicit velocity.
pub fn autonomous_solution_with_velocity(
    x0: &StateField,
    t: f64,
    c: f64,
    coupling: Coupling,
) -> Result<StateField> {
    if !(c.is_finite() && c > 0.0) {
        return Err(ChainError::BadParam(format!("velocity must be > 0, got {c}")));
    }
    autonomous_solution(x0, c * t, coupling)
}

fn require(problem: &OpenLoopProblem, coupling: Coupling, t: f64) -> Result<()> {
    if problem.coupling != coupling {
        return Err(ChainError::BcMismatch {
            expected: problem.coupling.name(),
            requested: coupling.name(),
        });
    }
    if t < 0.0 || !t.is_finite() {
        return Err(ChainError::NegativeTime(t));
    }
    Ok(())
}

struct DirichletEval<'a> {
    chain: Chain,
    x0: &'a StateField,
    control: &'a ControlSignal,
}

impl DirichletEval<'_> {
    fn value(&self, i: usize, omega: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return self.x0.sample(omega);
        }
        match self.chain.retarded(i, omega, t) {
            Some(s) => self.trace(i - 1, s) + self.control.value(i, s),
            None => self.x0.sample(omega - self.chain.c * t),
        }
    }

    /// Right trace `x_i(a_i, s)`; the virtual subsystem 0 carries zero.
    fn trace(&self, i: usize, s: f64) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.value(i, self.chain.right(i), s)
        }
    }
}

/// Dirichlet-coupled open-loop solution at time `t`.
pub fn dirichlet_solution(problem: &OpenLoopProblem, t: f64) -> Result<StateField> {
    require(problem, Coupling::Dirichlet, t)?;
    let eval = DirichletEval {
        chain: Chain::new(&problem.layout),
        x0: &problem.x0,
        control: &problem.control,
    };
    StateField::from_fn(*problem.x0.grid(), |w| {
        eval.value(eval.chain.subdomain_of(w), w, t)
    })
}

/// Aggregate Neumann inputs `v_i(t) = ∂_ω x_{i-1}(a_{i-1}, t) + u_i(t)` and
/// their running integrals, tabulated on a uniform grid from `t = 0`.
#[derive(Debug, Clone)]
pub struct NeumannInputs {
    tau: f64,
    x0_at_inflow: Vec<f64>,
    c: f64,
    aggregate: Vec<Vec<f64>>,
    integral: Vec<Vec<f64>>,
}

impl NeumannInputs {
    /// Tabulates the inputs up to `horizon` on the control's time step.
    ///
    /// The predecessor's boundary derivative is taken from its solution
    /// formula: at `a_{i-1}` it is `x₀'(a_{i-1} - ct)` before the inflow of
    /// subsystem `i - 1` arrives, and `v_{i-1}(t - l_{i-1}/c)` afterwards.
    pub fn tabulate(problem: &OpenLoopProblem, horizon: f64) -> Result<Self> {
        if horizon < 0.0 || !horizon.is_finite() {
            return Err(ChainError::NegativeTime(horizon));
        }
        let chain = Chain::new(&problem.layout);
        let tau = problem.control.tau();
        let steps = ((horizon / tau) - 1e-9).ceil().max(1.0) as usize;
        let h = problem.x0.grid().h();
        let dx0 = derivative_slice(problem.x0.values(), h);
        let n = chain.n();
        let c = chain.c;

        // `v_i` jumps where the upstream inflow front reaches `a_{i-1}`, so both
        // one-sided limits are tabulated and each trapezoid panel uses the
        // right limit at its left end and the left limit at its right end.
        let mut aggregate: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut left_limit: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 1..=n {
            let a_prev = chain.left(i);
            let mut right = Vec::with_capacity(steps + 1);
            let mut left = Vec::with_capacity(steps + 1);
            for k in 0..=steps {
                let t = k as f64 * tau;
                let u = problem.control.value(i, t);
                if i == 1 {
                    right.push(u);
                    left.push(u);
                    continue;
                }
                let unswept = sample_linear(&dx0, h, a_prev - c * t);
                let gap = a_prev - chain.left(i - 1);
                let lag = gap / c;
                let r = match chain.retarded(i - 1, a_prev, t) {
                    Some(s) => interp(&aggregate[i - 2], tau, s),
                    None => unswept,
                };
                let l = if c * t > gap + chain.tol {
                    interp(&left_limit[i - 2], tau, t - lag)
                } else {
                    unswept
                };
                right.push(r + u);
                left.push(l + u);
            }
            aggregate.push(right);
            left_limit.push(left);
        }
        let integral = aggregate
            .iter()
            .zip(&left_limit)
            .map(|(right, left)| {
                let mut acc = 0.0;
                let mut out = Vec::with_capacity(right.len());
                out.push(0.0);
                for k in 1..right.len() {
                    acc += 0.5 * tau * (right[k - 1] + left[k]);
                    out.push(acc);
                }
                out
            })
            .collect();
        let x0_at_inflow = (1..=n).map(|i| problem.x0.sample(chain.left(i))).collect();
        Ok(Self {
            tau,
            x0_at_inflow,
            c,
            aggregate,
            integral,
        })
    }

    /// `v_i(t)`.
    pub fn aggregate(&self, i: usize, t: f64) -> f64 {
        interp(&self.aggregate[i - 1], self.tau, t)
    }

    /// `∫₀ᵗ v_i`.
    pub fn integral(&self, i: usize, t: f64) -> f64 {
        interp(&self.integral[i - 1], self.tau, t)
    }

    /// Equivalent Dirichlet datum `𝔳_i(t) = x₀(a_{i-1}) - c ∫₀ᵗ v_i`.
    pub fn transformed(&self, i: usize, t: f64) -> f64 {
        self.x0_at_inflow[i - 1] - self.c * self.integral(i, t)
    }

    pub fn horizon(&self) -> f64 {
        (self.aggregate[0].len() - 1) as f64 * self.tau
    }
}

/// Linear interpolation in a table sampled at `k τ`, held at the ends.
pub(crate) fn interp(table: &[f64], tau: f64, t: f64) -> f64 {
    let s = (t / tau).clamp(0.0, (table.len() - 1) as f64);
    let j = s.floor() as usize;
    if j + 1 >= table.len() {
        return table[table.len() - 1];
    }
    let frac = s - j as f64;
    if frac <= 1e-12 {
        table[j]
    } else if frac >= 1.0 - 1e-12 {
        table[j + 1]
    } else {
        (1.0 - frac) * table[j] + frac * table[j + 1]
    }
}

/// Neumann-coupled open-loop solution at time `t`.
pub fn neumann_solution(problem: &OpenLoopProblem, t: f64) -> Result<StateField> {
    require(problem, Coupling::Neumann, t)?;
    if t == 0.0 {
        return Ok(problem.x0.clone());
    }
    let inputs = NeumannInputs::tabulate(problem, t)?;
    Ok(neumann_field(problem, &inputs, t))
}

fn neumann_field(problem: &OpenLoopProblem, inputs: &NeumannInputs, t: f64) -> StateField {
    let chain = Chain::new(&problem.layout);
    let x0 = &problem.x0;
    let values = x0
        .grid()
        .nodes()
        .map(|w| {
            let i = chain.subdomain_of(w);
            match chain.retarded(i, w, t) {
                Some(s) => inputs.transformed(i, s),
                None => x0.sample(w - chain.c * t),
            }
        })
        .collect();
    StateField::new(*x0.grid(), values).expect("finite by construction")
}

/// Solution at `t` for whichever coupling the problem carries.
pub fn solve_at(problem: &OpenLoopProblem, t: f64) -> Result<StateField> {
    match problem.coupling {
        Coupling::Dirichlet => dirichlet_solution(problem, t),
        Coupling::Neumann => neumann_solution(problem, t),
    }
}

/// Samples the open-loop solution at the given increasing times.
pub fn trajectory(problem: &OpenLoopProblem, times: &[f64]) -> Result<Trajectory> {
    let fields = match problem.coupling {
        Coupling::Dirichlet => times
            .iter()
            .map(|&t| dirichlet_solution(problem, t))
            .collect::<Result<Vec<_>>>()?,
        Coupling::Neumann => {
            let horizon = times.iter().cloned().fold(0.0, f64::max);
            if let Some(&t) = times.iter().find(|t| **t < 0.0) {
                return Err(ChainError::NegativeTime(t));
            }
            let inputs = NeumannInputs::tabulate(problem, horizon.max(problem.control.tau()))?;
            times
                .iter()
                .map(|&t| {
                    if t == 0.0 {
                        problem.x0.clone()
                    } else {
                        neumann_field(problem, &inputs, t)
                    }
                })
                .collect()
        }
    };
    Trajectory::new(times.to_vec(), fields, Some(problem.control.clone()))
}

/// `U_t = (0, L) ∩ ⋃ᵢ (a_{i-1}, a_{i-1} + ct]`, merged into disjoint intervals
/// (each read as half-open on the left).
pub fn controlled_support(layout: &ChainLayout, t: f64) -> Vec<(f64, f64)> {
    if t <= 0.0 || !t.is_finite() {
        return Vec::new();
    }
    let reach = layout.velocity() * t;
    let length = layout.length();
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for &a in layout.active_points() {
        let hi = (a + reach).min(length);
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((a, hi)),
        }
    }
    merged
}

/// First-order upwind time stepping of the open-loop chain, used as an
/// independent oracle for the trace-back formulas. Requires a grid aligned
/// with the access points and `cτ <= h`.
pub fn upwind_solution(problem: &OpenLoopProblem, t_end: f64, tau: f64) -> Result<StateField> {
    if t_end < 0.0 || !t_end.is_finite() {
        return Err(ChainError::NegativeTime(t_end));
    }
    let grid = *problem.x0.grid();
    let h = grid.h();
    let c = problem.layout.velocity();
    let access = grid.access_nodes(&problem.layout)?;
    if t_end == 0.0 {
        return Ok(problem.x0.clone());
    }
    let steps = (t_end / tau).round().max(1.0) as usize;
    let tau = t_end / steps as f64;
    let nu = c * tau / h;
    if nu > 1.0 + 1e-12 {
        return Err(ChainError::BadParam(format!("upwind CFL number {nu} exceeds 1")));
    }
    let n_sub = problem.layout.n_l();
    // Owner subsystem of every node; node 0 belongs to subsystem 1.
    let mut owner = vec![1usize; grid.len()];
    for i in 1..=n_sub {
        for o in owner.iter_mut().take(access[i] + 1).skip(access[i - 1] + 1) {
            *o = i;
        }
    }
    let control = &problem.control;
    let mut x = problem.x0.values().to_vec();
    let mut next = x.clone();
    // Inflow traces x_i(a_{i-1}^+, t) for the Neumann coupling.
    let mut inflow: Vec<f64> = (1..=n_sub).map(|i| x[access[i - 1]]).collect();

    for step in 0..steps {
        let t = step as f64 * tau;
        let ghost: Vec<f64> = match problem.coupling {
            Coupling::Dirichlet => (1..=n_sub)
                .map(|i| {
                    let upstream = if i == 1 { 0.0 } else { x[access[i - 1]] };
                    upstream + control.value(i, t)
                })
                .collect(),
            Coupling::Neumann => inflow.clone(),
        };
        for j in 1..grid.len() {
            let i = owner[j];
            let behind = if j - 1 == access[i - 1] { ghost[i - 1] } else { x[j - 1] };
            next[j] = x[j] - nu * (x[j] - behind);
        }
        if problem.coupling == Coupling::Neumann {
            for i in 1..=n_sub {
                let slope = if i == 1 {
                    0.0
                } else {
                    let p = access[i - 1];
                    let behind = if p - 1 == access[i - 2] { inflow[i - 2] } else { x[p - 1] };
                    (x[p] - behind) / h
                };
                inflow[i - 1] -= c * tau * (slope + control.value(i, t));
            }
            next[0] = inflow[0];
        } else {
            next[0] = control.value(1, t + tau);
        }
        std::mem::swap(&mut x, &mut next);
    }
    StateField::new(grid, x)
}
