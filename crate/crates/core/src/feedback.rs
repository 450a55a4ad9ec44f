//! Stabilizing feedback for Dirichlet and Neumann coupled chains.
//!
//! Both laws ramp in with `κ(t) = min(2t/Δt, 1)`, `Δt = Δ/c`, so that the
//! realized control is continuous at `t = 0`.
//!
//! Dirichlet: the inflow of subsystem `i >= 2` is `(1 - κ) x_{i-1}(a_{i-1}, t)`
//! and the first one receives `(1 - κ) x₀(ct)`. Once `κ = 1` nothing enters the
//! chain, so the state vanishes after `Δt/2 + L₀/c <= 2 L₀/c`.
//!
//! Neumann: the inflow trace `y_i(t) = x_i(a_{i-1}⁺, t)` obeys
//! `ẏ = -c κ y - c (1 - κ) f_i` with `f_i` the predecessor's boundary slope
//! (`f_1(t) = x₀'(ct)`), and is carried into the subdomain along
//! characteristics.

use serde::Serialize;

use crate::error::{ChainError, Result};
use crate::grid::{sample_linear, ControlSignal, StateField, TimeGrid, Trajectory};
use crate::layout::ChainLayout;
use crate::mild::{interp, Chain, Coupling};
use crate::norms::{derivative_slice, h1_squared_slice, l2, NormKind};
use crate::stabilizability::{dirichlet_constants, neumann_constants, trace_constant, DecayConstants};

/// Ramp `κ(t) = 2t/Δt` on `[0, Δt/2]`, `1` afterwards.
pub fn kappa(t: f64, dt: f64) -> Result<f64> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(ChainError::BadParam(format!("ramp length must be > 0, got {dt}")));
    }
    if t < 0.0 || !t.is_finite() {
        return Err(ChainError::NegativeTime(t));
    }
    Ok(ramp(t, dt))
}

fn ramp(t: f64, dt: f64) -> f64 {
    if t < 0.5 * dt {
        (2.0 * t / dt).max(0.0)
    } else {
        1.0
    }
}

/// `∫₀ᵗ κ` in closed form.
pub fn kappa_integral(t: f64, dt: f64) -> f64 {
    if t <= 0.5 * dt {
        t * t / dt
    } else {
        0.25 * dt + (t - 0.5 * dt)
    }
}

/// Closed-loop state, realized control and inflow traces on a time grid.
#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    layout: ChainLayout,
    x0: StateField,
    coupling: Coupling,
    grid: TimeGrid,
    trajectory: Trajectory,
    control: ControlSignal,
    inflow: Vec<Vec<f64>>,
    envelope: DecayConstants,
}

impl ClosedLoopRun {
    pub fn layout(&self) -> &ChainLayout {
        &self.layout
    }

    pub fn x0(&self) -> &StateField {
        &self.x0
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn control(&self) -> &ControlSignal {
        &self.control
    }

    /// Right limit `x_i(a_{i-1}⁺, t_k)`, which may differ from the nodal value
    /// at `a_{i-1}` (that node belongs to subsystem `i - 1`).
    pub fn inflow(&self, i: usize, k: usize) -> f64 {
        self.inflow[i - 1][k]
    }

    /// Decay constants the run is checked against by default.
    pub fn envelope(&self) -> &DecayConstants {
        &self.envelope
    }

    /// `‖x_i(·, t_k)‖_{H¹(Ω_i)}` with the inflow value at the left end.
    pub fn subdomain_h1(&self, i: usize, k: usize) -> Result<f64> {
        let nodes = self.x0.grid().access_nodes(&self.layout)?;
        let field = &self.trajectory.fields[k];
        let mut slice = field.values()[nodes[i - 1]..=nodes[i]].to_vec();
        slice[0] = self.inflow(i, k);
        Ok(h1_squared_slice(&slice, field.grid().h()).sqrt())
    }

    /// `(Σ_i ‖x_i(·, t_k)‖²_{H¹(Ω_i)})^{1/2}`.
    pub fn piecewise_h1(&self, k: usize) -> Result<f64> {
        let mut acc = 0.0;
        for i in 1..=self.layout.n_l() {
            acc += self.subdomain_h1(i, k)?.powi(2);
        }
        Ok(acc.sqrt())
    }
}

/// Piecewise H¹ norm of initial data over whole subdomains `first..=last`.
pub fn initial_h1(layout: &ChainLayout, x0: &StateField, first: usize, last: usize) -> Result<f64> {
    let nodes = x0.grid().access_nodes(layout)?;
    let h = x0.grid().h();
    Ok((first..=last)
        .map(|i| h1_squared_slice(&x0.values()[nodes[i - 1]..=nodes[i]], h))
        .sum::<f64>()
        .sqrt())
}

fn check_initial(layout: &ChainLayout, x0: &StateField) -> Result<Vec<usize>> {
    let tol = 1e-12 * layout.length().max(1.0);
    if (x0.grid().length() - layout.length()).abs() > tol {
        return Err(ChainError::BadParam(format!(
            "initial data covers [0, {}] but layout has L = {}",
            x0.grid().length(),
            layout.length()
        )));
    }
    let nodes = x0.grid().access_nodes(layout)?;
    let h = x0.grid().h();
    for w in nodes.windows(2) {
        let d = derivative_slice(&x0.values()[w[0]..=w[1]], h);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(ChainError::BadInitialData("initial data has no finite H¹ seminorm".into()));
        }
    }
    Ok(nodes)
}

/// Closed-form evaluator of the Dirichlet closed loop at arbitrary times.
#[derive(Debug, Clone)]
pub struct DirichletFeedback {
    chain: Chain,
    x0: StateField,
    dt: f64,
}

impl DirichletFeedback {
    pub fn new(layout: &ChainLayout, x0: &StateField) -> Result<Self> {
        check_initial(layout, x0)?;
        Ok(Self {
            chain: Chain::new(layout),
            x0: x0.clone(),
            dt: layout.delta() / layout.velocity(),
        })
    }

    /// Ramp length `Δt = Δ/c`.
    pub fn ramp_length(&self) -> f64 {
        self.dt
    }

    /// Effective inflow `x_i(a_{i-1}⁺, s)`.
    pub fn inflow(&self, i: usize, s: f64) -> f64 {
        let k = ramp(s, self.dt);
        if k >= 1.0 {
            return 0.0;
        }
        let upstream = if i == 1 {
            self.x0.sample(self.chain.c * s)
        } else {
            self.trace(i - 1, s)
        };
        (1.0 - k) * upstream
    }

    fn value(&self, i: usize, omega: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return self.x0.sample(omega);
        }
        match self.chain.retarded(i, omega, t) {
            Some(s) => self.inflow(i, s),
            None => self.x0.sample(omega - self.chain.c * t),
        }
    }

    /// State at a single point, `ω` attributed by the half-open cell rule.
    pub fn value_at(&self, omega: f64, t: f64) -> f64 {
        self.value(self.chain.subdomain_of(omega), omega, t)
    }

    /// Right trace `x_i(a_i, s)`.
    pub fn trace(&self, i: usize, s: f64) -> f64 {
        self.value(i, self.chain.right(i), s)
    }

    /// Realized control `u_i(t)`.
    pub fn control(&self, i: usize, t: f64) -> f64 {
        let k = ramp(t, self.dt);
        if i == 1 {
            (1.0 - k) * self.x0.sample(self.chain.c * t)
        } else {
            -k * self.trace(i - 1, t)
        }
    }

    pub fn field(&self, t: f64) -> Result<StateField> {
        if t < 0.0 || !t.is_finite() {
            return Err(ChainError::NegativeTime(t));
        }
        StateField::from_fn(*self.x0.grid(), |w| self.value(self.chain.subdomain_of(w), w, t))
    }
}

/// Runs the Dirichlet feedback on `t_grid`; checked by default against
/// `k = 1`, `M = e^{2 L₀/c}`.
pub fn dirichlet_closed_loop(layout: &ChainLayout, x0: &StateField, t_grid: &TimeGrid) -> Result<ClosedLoopRun> {
    let loop_ = DirichletFeedback::new(layout, x0)?;
    let times = t_grid.times();
    let fields = times.iter().map(|&t| loop_.field(t)).collect::<Result<Vec<_>>>()?;
    let n = layout.n_l();
    let control = ControlSignal::from_fn(n, t_grid, |i, t| loop_.control(i, t))?;
    let inflow = (1..=n)
        .map(|i| {
            times
                .iter()
                .map(|&t| if t <= 0.0 { x0.sample(layout.access_points()[i - 1]) } else { loop_.inflow(i, t) })
                .collect()
        })
        .collect();
    let envelope = dirichlet_constants(layout.max_gap(), 1.0, layout.velocity())?;
    Ok(ClosedLoopRun {
        layout: layout.clone(),
        x0: x0.clone(),
        coupling: Coupling::Dirichlet,
        grid: *t_grid,
        trajectory: Trajectory::new(times, fields, Some(control.clone()))?,
        control,
        inflow,
        envelope,
    })
}

/// Solves `ẏ = -c κ y - c (1 - κ) f`, `y(0) = y0`, on `t_grid` by the exact
/// integrating factor `e^{c ∫κ}`; the forcing integral uses the trapezoid rule.
pub fn neumann_boundary_ode(forcing: &[f64], y0: f64, dt: f64, c: f64, t_grid: &TimeGrid) -> Result<Vec<f64>> {
    if forcing.len() != t_grid.len() {
        return Err(ChainError::GridMismatch {
            expected: t_grid.len(),
            got: forcing.len(),
        });
    }
    if !(dt.is_finite() && dt > 0.0 && c.is_finite() && c > 0.0) {
        return Err(ChainError::BadParam(format!("need Δt > 0 and c > 0, got {dt}, {c}")));
    }
    let weight = |k: usize| {
        let t = t_grid.time(k);
        let off = 1.0 - ramp(t, dt);
        // (1 - κ) vanishes before e^{c∫κ} can overflow.
        if off == 0.0 {
            0.0
        } else {
            (c * kappa_integral(t, dt)).exp() * off * forcing[k]
        }
    };
    let tau = t_grid.tau;
    let mut out = Vec::with_capacity(forcing.len());
    let mut acc = 0.0;
    let mut prev = weight(0);
    out.push(y0);
    for k in 1..forcing.len() {
        let cur = weight(k);
        acc += 0.5 * tau * (prev + cur);
        prev = cur;
        let decay = (-c * kappa_integral(t_grid.time(k), dt)).exp();
        out.push(decay * (y0 - c * acc));
    }
    Ok(out)
}

/// Tabulated Neumann closed loop: slopes `f_i`, traces `y_i` and aggregate
/// inputs `v_i = κ y_i + (1 - κ) f_i` on a uniform time grid.
#[derive(Debug, Clone)]
pub struct NeumannFeedback {
    chain: Chain,
    x0: StateField,
    grid: TimeGrid,
    dt: f64,
    slope: Vec<Vec<f64>>,
    trace: Vec<Vec<f64>>,
}

impl NeumannFeedback {
    pub fn new(layout: &ChainLayout, x0: &StateField, t_grid: &TimeGrid) -> Result<Self> {
        let nodes = check_initial(layout, x0)?;
        let chain = Chain::new(layout);
        let h = x0.grid().h();
        let c = chain.c;
        let dt = layout.delta() / c;
        // x₀' per subdomain, so kinks at access points are not smeared.
        let pieces: Vec<Vec<f64>> = nodes
            .windows(2)
            .map(|w| derivative_slice(&x0.values()[w[0]..=w[1]], h))
            .collect();
        let dx0 = |omega: f64| {
            let i = chain.subdomain_of(omega);
            sample_linear(&pieces[i - 1], h, omega - chain.left(i))
        };
        let tau = t_grid.tau;
        let n = chain.n();
        let mut slope: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut trace: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut aggregate: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 1..=n {
            let a = chain.left(i);
            let f: Vec<f64> = (0..t_grid.len())
                .map(|k| {
                    let t = t_grid.time(k);
                    if i == 1 {
                        return dx0(c * t);
                    }
                    match chain.retarded(i - 1, a, t) {
                        Some(s) => interp(&aggregate[i - 2], tau, s),
                        None => dx0(a - c * t),
                    }
                })
                .collect();
            let y = neumann_boundary_ode(&f, x0.sample(a), dt, c, t_grid)?;
            let v = (0..t_grid.len())
                .map(|k| {
                    let kap = ramp(t_grid.time(k), dt);
                    kap * y[k] + (1.0 - kap) * f[k]
                })
                .collect();
            slope.push(f);
            trace.push(y);
            aggregate.push(v);
        }
        Ok(Self {
            chain,
            x0: x0.clone(),
            grid: *t_grid,
            dt,
            slope,
            trace,
        })
    }

    pub fn ramp_length(&self) -> f64 {
        self.dt
    }

    /// Inflow trace `y_i(t)`.
    pub fn inflow(&self, i: usize, t: f64) -> f64 {
        interp(&self.trace[i - 1], self.grid.tau, t)
    }

    /// Predecessor slope `f_i(t) = ∂_ω x_{i-1}(a_{i-1}, t)`.
    pub fn slope(&self, i: usize, t: f64) -> f64 {
        interp(&self.slope[i - 1], self.grid.tau, t)
    }

    /// Realized control: `u_1 = (1-κ) f_1 + κ y_1`, `u_i = κ (y_i - f_i)`.
    pub fn control(&self, i: usize, t: f64) -> f64 {
        let k = ramp(t, self.dt);
        let (y, f) = (self.inflow(i, t), self.slope(i, t));
        if i == 1 {
            (1.0 - k) * f + k * y
        } else {
            k * (y - f)
        }
    }

    pub fn field(&self, t: f64) -> Result<StateField> {
        if t < 0.0 || !t.is_finite() {
            return Err(ChainError::NegativeTime(t));
        }
        if t == 0.0 {
            return Ok(self.x0.clone());
        }
        StateField::from_fn(*self.x0.grid(), |w| {
            let i = self.chain.subdomain_of(w);
            match self.chain.retarded(i, w, t) {
                Some(s) => self.inflow(i, s),
                None => self.x0.sample(w - self.chain.c * t),
            }
        })
    }
}

/// Runs the Neumann feedback on `t_grid`; checked by default against the
/// constants of [`neumann_constants`] with `c₀` from [`trace_constant`].
pub fn neumann_closed_loop(layout: &ChainLayout, x0: &StateField, t_grid: &TimeGrid) -> Result<ClosedLoopRun> {
    let loop_ = NeumannFeedback::new(layout, x0, t_grid)?;
    let times = t_grid.times();
    let fields = times.iter().map(|&t| loop_.field(t)).collect::<Result<Vec<_>>>()?;
    let n = layout.n_l();
    let control = ControlSignal::from_fn(n, t_grid, |i, t| loop_.control(i, t))?;
    let inflow = loop_.trace.clone();
    let delta = layout.delta().min(layout.max_gap());
    let envelope = neumann_constants(layout.max_gap(), delta, layout.velocity(), trace_constant(delta))?;
    Ok(ClosedLoopRun {
        layout: layout.clone(),
        x0: x0.clone(),
        coupling: Coupling::Neumann,
        grid: *t_grid,
        trajectory: Trajectory::new(times, fields, Some(control.clone()))?,
        control,
        inflow,
        envelope,
    })
}

/// Outcome of comparing stored norms with `M e^{-kt} ‖x₀‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeReport {
    /// Largest `‖x(t)‖ / (M e^{-kt} ‖x₀‖)` over the stored times.
    pub max_ratio: f64,
    pub worst_time: f64,
    /// Multiplicative allowance for discretization error.
    pub slack: f64,
    pub passed: bool,
    /// `x₀ = 0`: the bound holds trivially.
    pub vacuous: bool,
}

fn state_norm(run: &ClosedLoopRun, k: usize, norm: NormKind) -> Result<f64> {
    match norm {
        NormKind::L2 => l2(&run.trajectory.fields[k], (0.0, run.layout.length())),
        NormKind::H1 => run.piecewise_h1(k),
    }
}

/// Checks `‖x(t)‖ <= slack · (1 + 1e-9) · M e^{-kt} ‖x₀‖` at every stored time.
/// H¹ norms are taken piecewise over the subdomains.
pub fn envelope_check(run: &ClosedLoopRun, m: f64, k: f64, norm: NormKind, slack: f64) -> Result<EnvelopeReport> {
    if run.trajectory.is_empty() {
        return Err(ChainError::EmptyTrajectory);
    }
    let initial = match norm {
        NormKind::L2 => l2(&run.x0, (0.0, run.layout.length()))?,
        NormKind::H1 => initial_h1(&run.layout, &run.x0, 1, run.layout.n_l())?,
    };
    if initial == 0.0 {
        return Ok(EnvelopeReport {
            max_ratio: 0.0,
            worst_time: 0.0,
            slack,
            passed: true,
            vacuous: true,
        });
    }
    let mut max_ratio = 0.0;
    let mut worst_time = 0.0;
    for (idx, &t) in run.trajectory.times.iter().enumerate() {
        let ratio = state_norm(run, idx, norm)? / (m * (-k * t).exp() * initial);
        if ratio > max_ratio {
            max_ratio = ratio;
            worst_time = t;
        }
    }
    Ok(EnvelopeReport {
        max_ratio,
        worst_time,
        slack,
        passed: max_ratio <= slack * (1.0 + 1e-9),
        vacuous: false,
    })
}

/// Right-hand side used by [`subdomain_envelope_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubdomainRhs {
    /// `‖x₀‖_{H¹(Ω_{i-1} ∪ Ω_i)}`: the data the closed-loop `x_i` depends on.
    DependenceDomain,
    /// `‖x₀‖_{H¹(Ω_i)}`.
    Literal,
}

/// Worst subdomain of a per-subdomain H¹ envelope check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubdomainEnvelopeReport {
    pub rhs: SubdomainRhs,
    pub max_ratio: f64,
    pub worst_subdomain: usize,
    pub worst_time: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Checks `‖x_i(t)‖_{H¹(Ω_i)} <= slack · M e^{-kt} · rhs_i` for every subdomain
/// and stored time. A zero right-hand side is violated by any nonzero state.
pub fn subdomain_envelope_check(
    run: &ClosedLoopRun,
    m: f64,
    k: f64,
    rhs: SubdomainRhs,
    slack: f64,
) -> Result<SubdomainEnvelopeReport> {
    if run.trajectory.is_empty() {
        return Err(ChainError::EmptyTrajectory);
    }
    let mut report = SubdomainEnvelopeReport {
        rhs,
        max_ratio: 0.0,
        worst_subdomain: 1,
        worst_time: 0.0,
        slack,
        passed: true,
    };
    for i in 1..=run.layout.n_l() {
        let first = match rhs {
            SubdomainRhs::DependenceDomain => i.saturating_sub(1).max(1),
            SubdomainRhs::Literal => i,
        };
        let bound = initial_h1(&run.layout, &run.x0, first, i)?;
        for (idx, &t) in run.trajectory.times.iter().enumerate() {
            let norm = run.subdomain_h1(i, idx)?;
            let scale = m * (-k * t).exp() * bound;
            let ratio = if norm <= 1e-14 {
                0.0
            } else if scale == 0.0 {
                f64::INFINITY
            } else {
                norm / scale
            };
            if ratio > report.max_ratio {
                report.max_ratio = ratio;
                report.worst_subdomain = i;
                report.worst_time = t;
            }
        }
    }
    report.passed = report.max_ratio <= slack * (1.0 + 1e-9);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{bump_initial, SpatialGrid};
    use crate::mild::autonomous_solution_with_velocity;

    fn equidistant_bump(h: f64) -> (ChainLayout, StateField) {
        let layout = ChainLayout::equidistant(1.0, 10.0, 2.0).unwrap();
        let g = SpatialGrid::new(10.0, h).unwrap();
        (layout, bump_initial(0.6, 0.8, &g).unwrap())
    }

    #[test]
    fn kappa_values() {
        assert_eq!(kappa(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(kappa(0.125, 0.5).unwrap(), 0.5);
        assert_eq!(kappa(0.25, 0.5).unwrap(), 1.0);
        assert_eq!(kappa(3.0, 0.5).unwrap(), 1.0);
        assert!(kappa(0.1, 0.0).is_err());
        assert!(kappa(-0.1, 0.5).is_err());
    }

    #[test]
    fn kappa_integral_matches_quadrature() {
        let dt = 0.7;
        for t in [0.0, 0.1, 0.35, 0.5, 2.0] {
            let n = 20_000;
            let q: f64 = (0..n).map(|j| ramp((j as f64 + 0.5) * t / n as f64, dt) * t / n as f64).sum();
            assert!((q - kappa_integral(t, dt)).abs() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn zero_initial_data_stays_zero() {
        let layout = ChainLayout::equidistant(1.0, 4.0, 2.0).unwrap();
        let g = SpatialGrid::new(4.0, 0.01).unwrap();
        let tg = TimeGrid::new(0.005, 400).unwrap();
        let run = dirichlet_closed_loop(&layout, &StateField::zeros(g), &tg).unwrap();
        assert!(run.trajectory().fields.iter().all(|f| f.max_abs() == 0.0));
        assert_eq!(run.control().max_abs(), 0.0);
        let rep = envelope_check(&run, 1.0, 1.0, NormKind::L2, 1.0).unwrap();
        assert!(rep.vacuous && rep.passed);
    }

    #[test]
    fn dirichlet_extinction_and_contraction() {
        let (layout, x0) = equidistant_bump(0.005);
        let tau = 0.0025;
        let tg = TimeGrid::new(tau, 600).unwrap();
        let run = dirichlet_closed_loop(&layout, &x0, &tg).unwrap();
        let n0 = l2(&x0, (0.0, 10.0)).unwrap();
        for (t, f) in run.trajectory().times.iter().zip(&run.trajectory().fields) {
            let n = l2(f, (0.0, 10.0)).unwrap();
            if *t >= 1.0 + tau - 1e-12 {
                assert!(n <= 1e-10 * n0, "t = {t}: {n}");
            } else {
                assert!(n <= n0 * (1.0 + 1e-12), "t = {t}: {n} > {n0}");
            }
        }
        let env = run.envelope();
        assert_eq!(env.m, 1.0f64.exp());
        assert!(envelope_check(&run, env.m, env.k, NormKind::L2, 1.0).unwrap().passed);
    }

    #[test]
    fn dirichlet_control_is_continuous_at_start() {
        let layout = ChainLayout::equidistant(1.0, 3.0, 2.0).unwrap();
        let g = SpatialGrid::new(3.0, 0.01).unwrap();
        let x0 = StateField::from_fn(g, |w| 1.0 + 0.5 * w).unwrap();
        let fb = DirichletFeedback::new(&layout, &x0).unwrap();
        assert_eq!(fb.control(1, 0.0), x0.values()[0]);
        assert_eq!(fb.control(2, 0.0), 0.0);
        let first = fb.field(0.005).unwrap().values()[1];
        assert!((first - x0.values()[0]).abs() <= 2.0 * 0.005);
    }

    #[test]
    fn evaluation_order_is_irrelevant() {
        let (layout, x0) = equidistant_bump(0.01);
        let fb = DirichletFeedback::new(&layout, &x0).unwrap();
        let forward = fb.field(0.37).unwrap();
        let g = *x0.grid();
        let mut backward: Vec<f64> = (0..g.len()).rev().map(|j| fb.value_at(g.node(j), 0.37)).collect();
        backward.reverse();
        assert_eq!(forward.values(), &backward[..]);
    }

    #[test]
    fn autonomous_run_violates_tight_envelope() {
        // One long subdomain and u = 0: the norm stays flat until the bump exits.
        let layout = ChainLayout::equidistant(20.0, 20.0, 2.0).unwrap();
        let g = SpatialGrid::new(20.0, 0.01).unwrap();
        let x0 = bump_initial(0.6, 0.8, &g).unwrap();
        let tg = TimeGrid::new(0.005, 1000).unwrap();
        let mut run = dirichlet_closed_loop(&layout, &x0, &tg).unwrap();
        let fields = tg
            .times()
            .iter()
            .map(|&t| autonomous_solution_with_velocity(&x0, t, 2.0, Coupling::Dirichlet).unwrap())
            .collect();
        run.trajectory = Trajectory::new(tg.times(), fields, None).unwrap();
        let rep = envelope_check(&run, 1.5, 1.0, NormKind::L2, 1.0).unwrap();
        assert!(!rep.passed);
        assert!(rep.worst_time < 9.5);
    }

    #[test]
    fn boundary_ode_homogeneous_matches_closed_form() {
        let tg = TimeGrid::new(0.001, 3000).unwrap();
        let (dt, c) = (0.5, 2.0);
        let y = neumann_boundary_ode(&vec![0.0; tg.len()], 1.3, dt, c, &tg).unwrap();
        for (k, v) in y.iter().enumerate() {
            let t = tg.time(k);
            let exact = (-c * kappa_integral(t, dt)).exp() * 1.3;
            assert!((v - exact).abs() <= 1e-15 * 1.3);
            assert!(v.abs() <= (c * dt / 2.0).exp() * (-c * t).exp() * 1.3 * (1.0 + 1e-9));
        }
        let zero = neumann_boundary_ode(&vec![0.0; tg.len()], 0.0, dt, c, &tg).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        assert!(matches!(
            neumann_boundary_ode(&[0.0; 3], 1.0, dt, c, &tg),
            Err(ChainError::GridMismatch { .. })
        ));
    }

    #[test]
    fn boundary_ode_forced_matches_rk4() {
        let tg = TimeGrid::new(0.0005, 4000).unwrap();
        let (dt, c) = (0.8, 1.5);
        let f = |t: f64| (3.0 * t).cos();
        let forcing: Vec<f64> = tg.times().iter().map(|&t| f(t)).collect();
        let y = neumann_boundary_ode(&forcing, 0.4, dt, c, &tg).unwrap();
        let rhs = |t: f64, y: f64| -c * ramp(t, dt) * y - c * (1.0 - ramp(t, dt)) * f(t);
        let (mut t, mut yy) = (0.0, 0.4);
        let step = 0.0005;
        for yk in &y[1..] {
            let k1 = rhs(t, yy);
            let k2 = rhs(t + step / 2.0, yy + step / 2.0 * k1);
            let k3 = rhs(t + step / 2.0, yy + step / 2.0 * k2);
            let k4 = rhs(t + step, yy + step * k3);
            yy += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += step;
            assert!((yk - yy).abs() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn neumann_constant_decays_exponentially() {
        let layout = ChainLayout::equidistant(1.0, 4.0, 2.0).unwrap();
        let g = SpatialGrid::new(4.0, 0.01).unwrap();
        let x0 = StateField::from_fn(g, |_| 2.0).unwrap();
        let tg = TimeGrid::new(0.005, 600).unwrap();
        let fb = NeumannFeedback::new(&layout, &x0, &tg).unwrap();
        let dt = fb.ramp_length();
        for i in 1..=4 {
            for k in [0, 50, 200, 600] {
                let t = tg.time(k);
                let exact = 2.0 * (-2.0 * kappa_integral(t, dt)).exp();
                assert!((fb.inflow(i, t) - exact).abs() < 1e-13);
            }
        }
        let s = fb.field(1.0).unwrap();
        let expected = 2.0 * (-2.0 * kappa_integral(0.5, dt)).exp();
        assert!((s.sample(1.0 + 1.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn neumann_subdomain_depends_on_predecessor_only() {
        // Perturbing x₀ on Ω_1 must not change x_3 and beyond.
        let layout = ChainLayout::equidistant(1.0, 4.0, 2.0).unwrap();
        let g = SpatialGrid::new(4.0, 0.01).unwrap();
        let base = StateField::from_fn(g, |w| (1.3 * w).sin()).unwrap();
        let bumped = base.zip_with(&bump_initial(0.5, 0.6, &g).unwrap(), |a, b| a + b).unwrap();
        let tg = TimeGrid::new(0.005, 300).unwrap();
        let a = NeumannFeedback::new(&layout, &base, &tg).unwrap().field(1.5).unwrap();
        let b = NeumannFeedback::new(&layout, &bumped, &tg).unwrap().field(1.5).unwrap();
        for (j, w) in g.nodes().enumerate() {
            if w > 2.0 + 1e-9 {
                assert_eq!(a.values()[j], b.values()[j], "ω = {w}");
            }
        }
    }

    #[test]
    fn neumann_envelopes() {
        let (layout, x0) = equidistant_bump(0.01);
        let tg = TimeGrid::new(0.005, 600).unwrap();
        let run = neumann_closed_loop(&layout, &x0, &tg).unwrap();
        let env = *run.envelope();
        assert_eq!(env.k, 2.0);
        let slack = 1.0 + 10.0 * 0.01;
        assert!(envelope_check(&run, env.m, env.k, NormKind::H1, slack).unwrap().passed);
        let dep = subdomain_envelope_check(&run, env.m, env.k, SubdomainRhs::DependenceDomain, slack).unwrap();
        assert!(dep.passed, "{dep:?}");
        // The bump sits in Ω_1 but feeds x_2 through the slope at a_1.
        let lit = subdomain_envelope_check(&run, env.m, env.k, SubdomainRhs::Literal, slack).unwrap();
        assert!(!lit.passed);
        assert_eq!(lit.worst_subdomain, 2);
    }

    proptest::proptest! {
        #[test]
        fn dirichlet_extinction_any_layout(gaps in proptest::collection::vec(1usize..40, 1..6), center in 0.1f64..0.9) {
            let h = 0.05;
            let mut points = vec![0.0];
            for g in &gaps {
                let next = points.last().unwrap() + *g as f64 * h;
                points.push(next);
            }
            let length = *points.last().unwrap();
            let layout = ChainLayout::from_generator(|i| points.get(i).copied().unwrap_or(f64::INFINITY), length, 1.0).unwrap();
            let grid = SpatialGrid::new(length, h).unwrap();
            let width = (0.4 * length).min(2.0 * center * length).min(2.0 * (1.0 - center) * length);
            let x0 = bump_initial(center * length, width, &grid).unwrap();
            let l0 = layout.max_gap();
            let fb = DirichletFeedback::new(&layout, &x0).unwrap();
            let n0 = l2(&x0, (0.0, length)).unwrap();
            let after = fb.field(2.0 * l0 + h).unwrap();
            proptest::prop_assert!(l2(&after, (0.0, length)).unwrap() <= 1e-10 * n0.max(1e-300));
        }
    }
}
