//! Domain-uniform stabilizability of the chain from its access-point geometry.
//!
//! The chain is stabilizable uniformly in `L` exactly when the gaps between
//! neighbouring access points are bounded, equivalently when every interval
//! free of access points is shorter than some `L₀`. Both forms are decided
//! here over a finite horizon, together with the explicit decay constants of
//! the stabilizing feedbacks and the counterexample certificate used when the
//! gaps are unbounded.

use serde::{Deserialize, Serialize};

use crate::error::{ChainError, Result};
use crate::layout::{build_chain, check_monotone, ChainLayout};

/// Result of checking bounded gaps over the first `horizon` gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub max_gap: f64,
    /// Index `i` with `a_{i+1} - a_i = max_gap`.
    pub argmax: usize,
    /// Number of gaps that were checked.
    pub horizon: usize,
    pub bound: Option<f64>,
    pub stabilizable: bool,
    /// The certified `L₀` (equal to `max_gap`) when stabilizable.
    pub l0: Option<f64>,
}

/// Checks `a_{i+1} - a_i <= bound` for `i < horizon`.
///
/// Without a declared bound a finite sequence always has a finite maximal gap,
/// so the flag only records that the checked prefix is bounded.
pub fn gap_criterion(points: &[f64], horizon: usize, bound: Option<f64>) -> Result<GapReport> {
    let horizon = horizon.min(points.len().saturating_sub(1));
    if horizon == 0 {
        return Err(ChainError::BadParam("need at least two access points".into()));
    }
    let prefix = &points[..=horizon];
    check_monotone(prefix)?;
    if let Some(b) = bound {
        if !(b.is_finite() && b > 0.0) {
            return Err(ChainError::BadParam(format!("gap bound must be > 0, got {b}")));
        }
    }
    let (argmax, max_gap) = prefix
        .windows(2)
        .map(|w| w[1] - w[0])
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, g)| if g > best.1 { (i, g) } else { best });
    let stabilizable = max_gap.is_finite() && bound.into_iter().all(|b| max_gap <= b);
    Ok(GapReport {
        max_gap,
        argmax,
        horizon,
        bound,
        stabilizable,
        l0: stabilizable.then_some(max_gap),
    })
}

/// Gap criterion over the subsystems of a layout (`i <= N_L`).
pub fn gap_criterion_layout(layout: &ChainLayout, bound: Option<f64>) -> Result<GapReport> {
    gap_criterion(layout.access_points(), layout.n_l(), bound)
}

/// Outcome of testing one interval against the access points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalCheck {
    /// The open interval contains no access point.
    pub disjoint: bool,
    pub length: f64,
}

impl IntervalCheck {
    /// Whether this interval is consistent with `I ∩ Ω_c = ∅ ⟹ |I| <= l0`.
    pub fn satisfies(&self, l0: f64) -> bool {
        !self.disjoint || self.length <= l0
    }
}

/// Tests whether the open interval `(lo, hi)` misses every access point.
pub fn interval_criterion(points: &[f64], interval: (f64, f64)) -> Result<IntervalCheck> {
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi < lo {
        return Err(ChainError::BadInterval { lo, hi });
    }
    let disjoint = !points.iter().any(|&a| a > lo && a < hi);
    Ok(IntervalCheck {
        disjoint,
        length: hi - lo,
    })
}

/// Exhaustive form of the interval condition over `[0, a_horizon]`: every
/// open interval with endpoints among the access points and gap midpoints is
/// tested. Returns `true` when no access-free interval longer than `l0` exists.
pub fn interval_scan(points: &[f64], horizon: usize, l0: f64) -> Result<bool> {
    let horizon = horizon.min(points.len().saturating_sub(1));
    let prefix = &points[..=horizon];
    check_monotone(prefix)?;
    let mut candidates: Vec<f64> = prefix.to_vec();
    candidates.extend(prefix.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    for (p, &lo) in candidates.iter().enumerate() {
        for &hi in &candidates[p + 1..] {
            if !interval_criterion(prefix, (lo, hi))?.satisfies(l0) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Which coupling a set of decay constants belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Dirichlet,
    Neumann,
}

/// Intermediate constants of the Neumann estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeumannDetail {
    pub c0: f64,
    /// Ramp length `Δt = Δ / c`.
    pub dt: f64,
    pub k1: f64,
    pub k2: f64,
    pub m1: f64,
    pub m2: f64,
}

impl NeumannDetail {
    /// `M₁` with the first gap length `a₁` in place of its bound `L₀`.
    pub fn m1_sharp(&self, a1: f64) -> f64 {
        (self.k1 * (2.0 * a1).exp()).sqrt()
    }
}

/// Constants of an exponential envelope `‖x(t)‖ <= M e^{-k t} ‖x₀‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConstants {
    pub m: f64,
    pub k: f64,
    pub variant: Variant,
    pub neumann: Option<NeumannDetail>,
}

impl DecayConstants {
    pub fn envelope(&self, t: f64) -> f64 {
        self.m * (-self.k * t).exp()
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ChainError::BadParam(format!("{name} must be > 0, got {v}")))
    }
}

/// `M = e^{2 k L₀ / c}` for the extinguishing Dirichlet feedback, any `k > 0`.
pub fn dirichlet_constants(l0: f64, k: f64, c: f64) -> Result<DecayConstants> {
    positive("L0", l0)?;
    positive("k", k)?;
    positive("c", c)?;
    Ok(DecayConstants {
        m: (2.0 * k * l0 / c).exp(),
        k,
        variant: Variant::Dirichlet,
        neumann: None,
    })
}

/// Uniform trace constant `c₀ = 2 max{1/Δ, 1}` for `‖v(0)‖² <= c₀ ‖v‖²_{H¹(0,a)}`,
/// valid for all `a >= Δ`.
pub fn trace_constant(delta: f64) -> f64 {
    2.0 * (1.0 / delta).max(1.0)
}

/// Constants of the Neumann feedback estimate; `k = c`.
pub fn neumann_constants(l0: f64, delta: f64, c: f64, c0: f64) -> Result<DecayConstants> {
    positive("L0", l0)?;
    positive("Delta", delta)?;
    positive("c", c)?;
    positive("c0", c0)?;
    let dt = delta / c;
    let cdt = c * dt;
    let k1 = 2.0 * c0 * l0 * cdt.exp() + 2.0 * (l0 / c) * (2.0 * cdt).exp() + 1.0 + 1.0 / c;
    let k2 = l0 * (c0 + 1.0 / c) * (2.0 * (l0 + cdt)).exp();
    let m1 = (k1 * (2.0 * l0).exp()).sqrt();
    let m2 = (2.0 * k2 + (2.0 * (l0 + cdt)).exp()).sqrt();
    Ok(DecayConstants {
        m: m1.max(m2),
        k: c,
        variant: Variant::Neumann,
        neumann: Some(NeumannDetail { c0, dt, k1, k2, m1, m2 }),
    })
}

/// Gap length `L₀ = 3c |ln M / k|` beyond which no `(M, k)` envelope can hold.
pub fn certificate_length(m: f64, k: f64, c: f64) -> Result<f64> {
    positive("M", m)?;
    positive("k", k)?;
    positive("c", c)?;
    Ok(3.0 * c * (m.ln() / k).abs())
}

/// Witness that an `(M, k)` envelope fails on a layout with a long gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub l0_target: f64,
    pub gap: (f64, f64),
    pub t_star: f64,
    pub support: (f64, f64),
    pub epsilon: f64,
    /// `M e^{-k t*}`, strictly below 1 whenever `L₀ = 3c|ln M / k| > 0`.
    pub envelope_at_t_star: f64,
}

impl Certificate {
    /// Where the initial support sits at `t*` under pure transport.
    pub fn translated_support(&self, c: f64) -> (f64, f64) {
        (self.support.0 + c * self.t_star, self.support.1 + c * self.t_star)
    }
}

/// Finds a gap longer than `L₀ + ε` and places the initial support at its
/// left end. Any control leaves the translated support untouched up to
/// `t* = L₀ / (2c)`, so the norm there equals `‖x₀‖ > M e^{-k t*} ‖x₀‖`.
pub fn worst_case_certificate(
    l0: f64,
    eps: f64,
    layout: &ChainLayout,
    m: f64,
    k: f64,
) -> Result<Certificate> {
    positive("epsilon", eps)?;
    positive("M", m)?;
    positive("k", k)?;
    if !(l0.is_finite() && l0 >= 0.0) {
        return Err(ChainError::BadParam(format!("L0 must be >= 0, got {l0}")));
    }
    let c = layout.velocity();
    let needed = l0 + eps;
    let points = &layout.access_points()[..=layout.n_l()];
    let gap = points
        .windows(2)
        .find(|w| w[1] - w[0] > needed && w[0] + 0.5 * l0 + eps <= layout.length())
        .map(|w| (w[0], w[1]))
        .ok_or(ChainError::NoSufficientGap {
            needed,
            largest: layout.max_gap(),
        })?;
    let t_star = l0 / (2.0 * c);
    Ok(Certificate {
        l0_target: l0,
        gap,
        t_star,
        support: (gap.0, gap.0 + eps),
        epsilon: eps,
        envelope_at_t_star: m * (-k * t_star).exp(),
    })
}

/// Mirror image `ω ↦ L - ω` of the clipped layout, used to reduce
/// detectability (reversed transport) to stabilizability.
pub fn reversed_chain(layout: &ChainLayout) -> Result<ChainLayout> {
    let length = layout.length();
    let mut points: Vec<f64> = layout.active_points().iter().map(|a| length - a).collect();
    points.push(0.0);
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    points.dedup();
    build_chain(&points, length, layout.velocity())
}
