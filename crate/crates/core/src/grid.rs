//! Uniform grids, sampled fields, control signals and trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{ChainError, Result};
use crate::layout::ChainLayout;

/// Relative tolerance used when snapping coordinates to grid nodes.
pub const ALIGN_TOL: f64 = 1e-12;

/// Uniform nodes `ω_j = j h`, `j = 0..=n`, on `[0, L]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    length: f64,
    h: f64,
    cells: usize,
}

impl SpatialGrid {
    /// `L` must be an integer multiple of `h`.
    pub fn new(length: f64, h: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(ChainError::BadParam(format!("grid length must be > 0, got {length}")));
        }
        if !(h.is_finite() && h > 0.0 && h <= length) {
            return Err(ChainError::BadParam(format!("grid spacing must be in (0, L], got {h}")));
        }
        let ratio = length / h;
        let cells = ratio.round();
        if (ratio - cells).abs() > 1e-9 * ratio.max(1.0) {
            return Err(ChainError::BadParam(format!("L = {length} is not a multiple of h = {h}")));
        }
        Ok(Self {
            length,
            h: length / cells,
            cells: cells as usize,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Number of nodes, `L/h + 1`.
    pub fn len(&self) -> usize {
        self.cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.cells {
            self.length
        } else {
            j as f64 * self.h
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|j| self.node(j))
    }

    /// Node index of `ω` if it lies on the grid.
    pub fn index_of(&self, omega: f64) -> Option<usize> {
        let x = omega / self.h;
        let j = x.round();
        if j < 0.0 || j > self.cells as f64 {
            return None;
        }
        if (x - j).abs() * self.h <= ALIGN_TOL * self.length.max(1.0) {
            Some(j as usize)
        } else {
            None
        }
    }

    /// Node indices of the access points `a_0 .. a_{N_L - 1}` plus the closing
    /// node of the last subsystem (`min(a_{N_L}, L)`).
    pub fn access_nodes(&self, layout: &ChainLayout) -> Result<Vec<usize>> {
        if (layout.length() - self.length).abs() > ALIGN_TOL * self.length.max(1.0) {
            return Err(ChainError::BadParam(format!(
                "grid covers [0, {}] but layout has L = {}",
                self.length,
                layout.length()
            )));
        }
        let mut nodes = Vec::with_capacity(layout.n_l() + 1);
        for &a in layout.active_points() {
            let j = self
                .index_of(a)
                .ok_or(ChainError::GridMisaligned { point: a, h: self.h })?;
            nodes.push(j);
        }
        nodes.push(self.cells);
        Ok(nodes)
    }
}

/// Grid function: one real value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    grid: SpatialGrid,
    values: Vec<f64>,
}

/// Wire form of a field: `{"h": .., "values": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSpec {
    pub h: f64,
    pub values: Vec<f64>,
}

impl StateField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(ChainError::GridMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(ChainError::BadInitialData(format!("non-finite value at node {j}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn<F: FnMut(f64) -> f64>(grid: SpatialGrid, mut f: F) -> Result<Self> {
        let values = grid.nodes().map(&mut f).collect();
        Self::new(grid, values)
    }

    pub fn from_spec(spec: &FieldSpec) -> Result<Self> {
        if spec.values.len() < 2 {
            return Err(ChainError::BadParam("a field needs at least two nodes".into()));
        }
        let grid = SpatialGrid::new(spec.h * (spec.values.len() - 1) as f64, spec.h)?;
        Self::new(grid, spec.values.clone())
    }

    pub fn to_spec(&self) -> FieldSpec {
        FieldSpec {
            h: self.grid.h,
            values: self.values.clone(),
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Piecewise-linear interpolant; zero outside `[0, L]`.
    pub fn sample(&self, omega: f64) -> f64 {
        sample_linear(&self.values, self.grid.h, omega)
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &StateField, f: F) -> Result<StateField> {
        if self.grid != other.grid {
            return Err(ChainError::GridMismatch {
                expected: self.grid.len(),
                got: other.grid.len(),
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        StateField::new(self.grid, values)
    }

    pub fn scaled(&self, s: f64) -> StateField {
        StateField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Linear interpolation of nodal samples with spacing `h`, zero outside.
pub(crate) fn sample_linear(values: &[f64], h: f64, x: f64) -> f64 {
    let n = values.len() - 1;
    let s = x / h;
    let tol = 1e-9;
    if s < -tol || s > n as f64 + tol {
        return 0.0;
    }
    let s = s.clamp(0.0, n as f64);
    let j = (s.floor() as usize).min(n.saturating_sub(1));
    let frac = s - j as f64;
    if frac <= 1e-12 {
        values[j]
    } else if frac >= 1.0 - 1e-12 {
        values[j + 1]
    } else {
        (1.0 - frac) * values[j] + frac * values[j + 1]
    }
}

/// Smooth bump `exp(1 + 1/((2(ω-ε₁)/ε₂)² - 1))` on `(ε₁ - ε₂/2, ε₁ + ε₂/2)`,
/// zero elsewhere. Peak value 1 at `ω = ε₁`.
pub fn bump_value(eps1: f64, eps2: f64, omega: f64) -> f64 {
    let s = 2.0 * (omega - eps1) / eps2;
    let s2 = s * s;
    if s2 >= 1.0 {
        0.0
    } else {
        (1.0 + 1.0 / (s2 - 1.0)).exp()
    }
}

/// Samples the bump perturbation on `grid`.
pub fn bump_initial(eps1: f64, eps2: f64, grid: &SpatialGrid) -> Result<StateField> {
    if !(eps2.is_finite() && eps2 > 0.0 && eps1.is_finite()) {
        return Err(ChainError::BadParam(format!("bump width must be > 0, got {eps2}")));
    }
    let lo = eps1 - 0.5 * eps2;
    let hi = eps1 + 0.5 * eps2;
    let tol = ALIGN_TOL * grid.length().max(1.0);
    if lo < -tol || hi > grid.length() + tol {
        return Err(ChainError::SupportOutOfDomain {
            lo,
            hi,
            length: grid.length(),
        });
    }
    StateField::from_fn(*grid, |w| bump_value(eps1, eps2, w))
}

/// Multiplies by the indicator of the closed interval `[lo, hi]`.
pub fn restrict(field: &StateField, interval: (f64, f64)) -> Result<StateField> {
    let (lo, hi) = interval;
    let length = field.grid.length();
    let tol = ALIGN_TOL * length.max(1.0);
    if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < -tol || hi > length + tol {
        return Err(ChainError::BadInterval { lo, hi });
    }
    let values = field
        .grid
        .nodes()
        .zip(&field.values)
        .map(|(w, &v)| if w >= lo - tol && w <= hi + tol { v } else { 0.0 })
        .collect();
    Ok(StateField {
        grid: field.grid,
        values,
    })
}

/// Uniform time levels `t_k = k τ`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub tau: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(tau: f64, steps: usize) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(ChainError::BadParam(format!("time step must be > 0, got {tau}")));
        }
        Ok(Self { tau, steps })
    }

    /// Covers `[0, horizon]` with step `τ`; `horizon` must be a multiple of `τ`.
    pub fn covering(horizon: f64, tau: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ChainError::BadParam(format!("horizon must be > 0, got {horizon}")));
        }
        let ratio = horizon / tau;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(ChainError::BadParam(format!("T = {horizon} is not a multiple of τ = {tau}")));
        }
        Self::new(horizon / steps, steps as usize)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }
}

/// Per-access-point scalar signals `u_i` sampled at `start + k τ`.
///
/// Channel `i` (1-based, as in the chain) is stored at `channels[i - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    start: f64,
    tau: f64,
    channels: Vec<Vec<f64>>,
}

impl ControlSignal {
    pub fn new(start: f64, tau: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(ChainError::BadParam(format!("control step must be > 0, got {tau}")));
        }
        if channels.is_empty() {
            return Err(ChainError::BadParam("a control needs at least one channel".into()));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(ChainError::BadParam("control channels are empty".into()));
        }
        for ch in &channels {
            if ch.len() != len {
                return Err(ChainError::GridMismatch {
                    expected: len,
                    got: ch.len(),
                });
            }
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(ChainError::BadParam("non-finite control value".into()));
            }
        }
        Ok(Self { start, tau, channels })
    }

    pub fn zeros(n_channels: usize, grid: &TimeGrid) -> Self {
        Self {
            start: 0.0,
            tau: grid.tau,
            channels: vec![vec![0.0; grid.len()]; n_channels.max(1)],
        }
    }

    /// Samples `f(i, t)` for channels `i = 1..=n_channels` on `grid`.
    pub fn from_fn<F: Fn(usize, f64) -> f64>(n_channels: usize, grid: &TimeGrid, f: F) -> Result<Self> {
        let channels = (1..=n_channels)
            .map(|i| (0..grid.len()).map(|k| f(i, grid.time(k))).collect())
            .collect();
        Self::new(0.0, grid.tau, channels)
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn end(&self) -> f64 {
        self.start + (self.len() - 1) as f64 * self.tau
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.tau
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i - 1]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    /// `u_i(t)`, linearly interpolated and held constant outside the sample range.
    pub fn value(&self, i: usize, t: f64) -> f64 {
        let ch = &self.channels[i - 1];
        let s = ((t - self.start) / self.tau).clamp(0.0, (ch.len() - 1) as f64);
        let j = s.floor() as usize;
        if j + 1 >= ch.len() {
            return ch[ch.len() - 1];
        }
        let frac = s - j as f64;
        if frac <= 1e-12 {
            ch[j]
        } else if frac >= 1.0 - 1e-12 {
            ch[j + 1]
        } else {
            (1.0 - frac) * ch[j] + frac * ch[j + 1]
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Time-indexed fields plus the control that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<StateField>,
    pub control: Option<ControlSignal>,
}

/// Wire form of a trajectory: `{"times": [...], "fields": [[...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub times: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, fields: Vec<StateField>, control: Option<ControlSignal>) -> Result<Self> {
        if times.len() != fields.len() {
            return Err(ChainError::GridMismatch {
                expected: times.len(),
                got: fields.len(),
            });
        }
        if times.is_empty() {
            return Err(ChainError::EmptyTrajectory);
        }
        let grid = fields[0].grid;
        if fields.iter().any(|f| f.grid != grid) {
            return Err(ChainError::BadParam("trajectory fields live on different grids".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ChainError::BadParam("trajectory times must increase".into()));
        }
        Ok(Self { times, fields, control })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.fields[0].grid
    }

    pub fn to_spec(&self) -> TrajectorySpec {
        TrajectorySpec {
            times: self.times.clone(),
            fields: self.fields.iter().map(|f| f.values.clone()).collect(),
        }
    }
}
