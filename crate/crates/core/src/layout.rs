//! Geometry of the transport chain.
//!
//! A chain on `(0, L)` is described by its control access points
//! `0 = a_0 < a_1 < ...`. Subsystem `i` lives on `(a_{i-1}, a_i)` clipped to
//! the domain, and is fed at `a_{i-1}` by the right trace of subsystem `i - 1`
//! plus the control `u_i`.

use serde::{Deserialize, Serialize};

use crate::error::{ChainError, Result};

/// Upper bound on how many access points a generator may produce.
const MAX_GENERATED_POINTS: usize = 10_000_000;

/// Access-point layout of a chain on `(0, L)` with transport velocity `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayoutSpec", into = "LayoutSpec")]
pub struct ChainLayout {
    points: Vec<f64>,
    length: f64,
    velocity: f64,
    n_l: usize,
    delta: f64,
}

/// Wire form of a layout: `{"access_points": [...], "L": .., "c": ..}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutSpec {
    pub access_points: Vec<f64>,
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "c")]
    pub velocity: f64,
}

impl TryFrom<LayoutSpec> for ChainLayout {
    type Error = ChainError;

    fn try_from(spec: LayoutSpec) -> Result<Self> {
        build_chain(&spec.access_points, spec.length, spec.velocity)
    }
}

impl From<ChainLayout> for LayoutSpec {
    fn from(layout: ChainLayout) -> Self {
        LayoutSpec {
            access_points: layout.points,
            length: layout.length,
            velocity: layout.velocity,
        }
    }
}

/// Validates an access-point list and derives `N_L`, `Δ` and the subdomains.
pub fn build_chain(access_points: &[f64], length: f64, velocity: f64) -> Result<ChainLayout> {
    if !(length.is_finite() && length > 0.0) {
        return Err(ChainError::BadParam(format!("domain length must be > 0, got {length}")));
    }
    if !(velocity.is_finite() && velocity > 0.0) {
        return Err(ChainError::BadParam(format!("velocity must be > 0, got {velocity}")));
    }
    check_monotone(access_points)?;
    let first = access_points[0];
    if first != 0.0 {
        return Err(ChainError::BadAnchor(first));
    }
    let last = *access_points.last().expect("checked non-empty");
    if last < length {
        return Err(ChainError::Uncovered { last, length });
    }
    if access_points.len() < 2 {
        return Err(ChainError::Uncovered { last, length });
    }

    let n_l = access_points
        .iter()
        .position(|&a| a >= length)
        .expect("last point covers the domain");
    let delta = access_points[..=n_l]
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);

    Ok(ChainLayout {
        points: access_points.to_vec(),
        length,
        velocity,
        n_l,
        delta,
    })
}

/// Checks that a raw sequence is non-empty, finite and strictly increasing.
pub fn check_monotone(points: &[f64]) -> Result<()> {
    if points.is_empty() {
        return Err(ChainError::BadParam("empty access-point list".into()));
    }
    if let Some(bad) = points.iter().find(|p| !p.is_finite()) {
        return Err(ChainError::BadParam(format!("non-finite access point {bad}")));
    }
    for (index, w) in points.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(ChainError::NonMonotone {
                index: index + 1,
                prev: w[0],
                next: w[1],
            });
        }
    }
    Ok(())
}

impl ChainLayout {
    /// `a_i = i * gap` for as many points as needed to cover `(0, L)`.
    pub fn equidistant(gap: f64, length: f64, velocity: f64) -> Result<Self> {
        if !(gap.is_finite() && gap > 0.0) {
            return Err(ChainError::BadParam(format!("gap must be > 0, got {gap}")));
        }
        Self::from_generator(|i| i as f64 * gap, length, velocity)
    }

    /// Two access points `0` and `L/2`, closed by `L` itself.
    pub fn midpoint(length: f64, velocity: f64) -> Result<Self> {
        build_chain(&[0.0, 0.5 * length, length], length, velocity)
    }

    /// Materializes an infinite sequence `i -> a_i` up to the first point `>= L`.
    pub fn from_generator<F>(generator: F, length: f64, velocity: f64) -> Result<Self>
    where
        F: Fn(usize) -> f64,
    {
        if !(length.is_finite() && length > 0.0) {
            return Err(ChainError::BadParam(format!("domain length must be > 0, got {length}")));
        }
        let mut points = Vec::new();
        for i in 0..MAX_GENERATED_POINTS {
            let a = generator(i);
            points.push(a);
            if a >= length || !a.is_finite() {
                return build_chain(&points, length, velocity);
            }
            if i > 0 && a <= points[i - 1] {
                return build_chain(&points, length, velocity);
            }
        }
        Err(ChainError::BadParam(format!(
            "generator did not reach L = {length} within {MAX_GENERATED_POINTS} points"
        )))
    }

    /// All stored access points, including any beyond `L`.
    pub fn access_points(&self) -> &[f64] {
        &self.points
    }

    /// `a_0 .. a_{N_L - 1}`: the points that feed a subsystem inside the domain.
    pub fn active_points(&self) -> &[f64] {
        &self.points[..self.n_l]
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn velocity(&self) -> f64 {
        self.velocity
    }

    /// Index of the first access point `>= L`; also the number of subsystems.
    pub fn n_l(&self) -> usize {
        self.n_l
    }

    /// Smallest gap `a_i - a_{i-1}` over `i <= N_L`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Largest gap `a_i - a_{i-1}` over `i <= N_L`.
    pub fn max_gap(&self) -> f64 {
        self.points[..=self.n_l]
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Clipped subdomain `Ω_i ∩ (0, L)` for `i` in `1..=N_L`.
    pub fn subdomain(&self, i: usize) -> (f64, f64) {
        assert!(i >= 1 && i <= self.n_l, "subdomain index {i} out of 1..={}", self.n_l);
        (self.points[i - 1], self.points[i].min(self.length))
    }

    pub fn subdomains(&self) -> Vec<(f64, f64)> {
        (1..=self.n_l).map(|i| self.subdomain(i)).collect()
    }

    /// Subsystem index owning `ω`, using the half-open cells `(a_{i-1}, a_i]`.
    /// The left end `ω = 0` is attributed to subsystem 1.
    pub fn subdomain_of(&self, omega: f64) -> usize {
        let active = &self.points[1..self.n_l];
        1 + active.partition_point(|&a| a < omega)
    }

    /// Gap lengths `a_i - a_{i-1}` for `i` in `1..=N_L`, unclipped.
    pub fn gaps(&self) -> Vec<f64> {
        self.points[..=self.n_l].windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn to_spec(&self) -> LayoutSpec {
        self.clone().into()
    }
}
