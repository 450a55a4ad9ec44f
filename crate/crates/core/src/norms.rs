//! Discrete norms. All integrals use the trapezoidal rule.

use serde::{Deserialize, Serialize};

use crate::error::{ChainError, Result};
use crate::grid::{StateField, Trajectory, ALIGN_TOL};

/// Exponential spatial weight `e^{μ |ω - center|}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub mu: f64,
    pub center: f64,
}

impl WeightSpec {
    pub fn new(mu: f64, center: f64) -> Result<Self> {
        if !(mu.is_finite() && mu >= 0.0) || !center.is_finite() {
            return Err(ChainError::BadParam(format!("weight rate must be >= 0, got {mu}")));
        }
        Ok(Self { mu, center })
    }

    pub fn unweighted() -> Self {
        Self { mu: 0.0, center: 0.0 }
    }

    pub fn at(&self, omega: f64) -> f64 {
        if self.mu == 0.0 {
            1.0
        } else {
            (self.mu * (omega - self.center).abs()).exp()
        }
    }
}

/// Which norm an envelope or report is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L2,
    H1,
}

fn check_interval(field: &StateField, interval: (f64, f64)) -> Result<(f64, f64)> {
    let (lo, hi) = interval;
    let length = field.grid().length();
    let tol = ALIGN_TOL * length.max(1.0);
    if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < -tol || hi > length + tol {
        return Err(ChainError::BadInterval { lo, hi });
    }
    Ok((lo.max(0.0), hi.min(length)))
}

/// Quadrature points of `[lo, hi]`: interior nodes plus the (possibly off-grid) ends.
fn quadrature_points(field: &StateField, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let grid = field.grid();
    let h = grid.h();
    let tol = ALIGN_TOL * grid.length().max(1.0);
    let mut pts = vec![(lo, field.sample(lo))];
    let first = ((lo + tol) / h).ceil().max(0.0) as usize;
    for j in first..grid.len() {
        let w = grid.node(j);
        if w > hi - tol {
            break;
        }
        if w > lo + tol {
            pts.push((w, field.values()[j]));
        }
    }
    if hi > lo {
        // Exact node values at grid-aligned ends.
        if let Some(j) = grid.index_of(lo) {
            pts[0].1 = field.values()[j];
        }
        let end = grid.index_of(hi).map_or_else(|| field.sample(hi), |j| field.values()[j]);
        pts.push((hi, end));
    } else if let Some(j) = grid.index_of(lo) {
        pts[0].1 = field.values()[j];
    }
    pts
}

fn trapezoid_squares(pts: &[(f64, f64)]) -> f64 {
    pts.windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 * w[0].1 + w[1].1 * w[1].1))
        .sum()
}

/// `‖x‖_{L²(lo, hi)}` by trapezoidal quadrature.
pub fn l2(field: &StateField, interval: (f64, f64)) -> Result<f64> {
    let (lo, hi) = check_interval(field, interval)?;
    Ok(trapezoid_squares(&quadrature_points(field, lo, hi)).sqrt())
}

/// Squared L² norm of nodal samples with spacing `h` over their full extent.
pub fn l2_squared_slice(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().map(|v| v * v).sum();
    let first = values[0];
    let last = values[values.len() - 1];
    h * (inner + 0.5 * (first * first + last * last))
}

/// Difference quotients: central inside, second-order one-sided at the ends.
pub fn derivative_slice(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    match n {
        0 | 1 => vec![0.0; n],
        2 => {
            let d = (values[1] - values[0]) / h;
            vec![d, d]
        }
        _ => {
            let mut d = Vec::with_capacity(n);
            d.push((-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h));
            for j in 1..n - 1 {
                d.push((values[j + 1] - values[j - 1]) / (2.0 * h));
            }
            d.push((3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h));
            d
        }
    }
}

/// Squared H¹ norm of nodal samples with spacing `h`.
pub fn h1_squared_slice(values: &[f64], h: f64) -> f64 {
    l2_squared_slice(values, h) + l2_squared_slice(&derivative_slice(values, h), h)
}

/// `‖x‖_{H¹(lo, hi)} = (‖x‖² + ‖x'‖²)^{1/2}`.
///
/// The derivative part uses the grid nodes inside `[lo, hi]`; at least two are
/// required.
pub fn h1(field: &StateField, interval: (f64, f64)) -> Result<f64> {
    let (lo, hi) = check_interval(field, interval)?;
    let grid = field.grid();
    let tol = ALIGN_TOL * grid.length().max(1.0);
    let h = grid.h();
    let first = ((lo - tol) / h).ceil().max(0.0) as usize;
    let last = (((hi + tol) / h).floor() as usize).min(grid.cells());
    if last < first + 1 {
        return Err(ChainError::BadInterval { lo, hi });
    }
    let slice = &field.values()[first..=last];
    let value_part = l2(field, (lo, hi))?.powi(2);
    let deriv_part = l2_squared_slice(&derivative_slice(slice, h), h);
    Ok((value_part + deriv_part).sqrt())
}

/// `‖e^{μ|ω-ε₁|} x‖_{L²(0,T; L²(0,L))}`: spatial trapezoid per slice, then
/// trapezoid in time. A single slice is taken with unit time weight.
pub fn weighted_l2_spacetime(trajectory: &Trajectory, weight: &WeightSpec) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(ChainError::EmptyTrajectory);
    }
    let grid = trajectory.grid();
    let w2: Vec<f64> = grid.nodes().map(|w| weight.at(w).powi(2)).collect();
    let slice_norms: Vec<f64> = trajectory
        .fields
        .iter()
        .map(|f| {
            let weighted: Vec<f64> = f
                .values()
                .iter()
                .zip(&w2)
                .map(|(v, ww)| v * v * ww)
                .collect();
            let n = weighted.len();
            grid.h() * (weighted[1..n - 1].iter().sum::<f64>() + 0.5 * (weighted[0] + weighted[n - 1]))
        })
        .collect();
    Ok(time_trapezoid(&trajectory.times, &slice_norms).sqrt())
}

/// Unweighted `L²(0,T; L²(0,L))` norm.
pub fn spacetime_l2(trajectory: &Trajectory) -> Result<f64> {
    weighted_l2_spacetime(trajectory, &WeightSpec::unweighted())
}

fn time_trapezoid(times: &[f64], values: &[f64]) -> f64 {
    if times.len() == 1 {
        return values[0];
    }
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{bump_initial, bump_value, restrict, SpatialGrid};

    /// Composite Gauss-Legendre (5 points) on `n` panels; independent of the
    /// trapezoidal implementation above.
    fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
        let nodes = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        let weights = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let hp = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let mid = a + (p as f64 + 0.5) * hp;
                nodes
                    .iter()
                    .zip(&weights)
                    .map(|(x, w)| w * f(mid + 0.5 * hp * x))
                    .sum::<f64>()
                    * 0.5
                    * hp
            })
            .sum()
    }

    #[test]
    fn constant_on_interval() {
        let g = SpatialGrid::new(4.0, 0.1).unwrap();
        let ones = StateField::from_fn(g, |_| 1.0).unwrap();
        assert!((l2(&ones, (0.0, 2.0)).unwrap() - 2f64.sqrt()).abs() < 1e-13);
        assert!((l2(&ones, (0.05, 2.05)).unwrap() - 2f64.sqrt()).abs() < 1e-13);
        assert!((h1(&ones, (0.0, 2.0)).unwrap() - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn bump_norm_matches_quadrature_oracle() {
        let g = SpatialGrid::new(2.0, 1e-4).unwrap();
        let bump = bump_initial(0.6, 0.8, &g).unwrap();
        let oracle = gauss_legendre(|w| bump_value(0.6, 0.8, w).powi(2), 0.2, 1.0, 4000).sqrt();
        // Reference value from adaptive quadrature: 0.6271780649585018.
        assert!((oracle - 0.627_178_064_958_501_8).abs() < 1e-12);
        let got = l2(&bump, (0.0, 2.0)).unwrap();
        assert!(((got - oracle) / oracle).abs() < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn restrict_then_norm() {
        let g = SpatialGrid::new(2.0, 0.01).unwrap();
        let bump = bump_initial(0.6, 0.8, &g).unwrap();
        let r = restrict(&bump, (0.2, 1.0)).unwrap();
        let a = l2(&r, (0.0, 2.0)).unwrap();
        let b = l2(&bump, (0.2, 1.0)).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn linear_field_h1() {
        let g = SpatialGrid::new(1.0, 1e-3).unwrap();
        let f = StateField::from_fn(g, |w| w).unwrap();
        let exact = (1.0f64 / 3.0 + 1.0).sqrt();
        assert!((h1(&f, (0.0, 1.0)).unwrap() - exact).abs() < 1e-6);
    }

    #[test]
    fn h1_partition_agrees() {
        let g = SpatialGrid::new(2.0, 1e-3).unwrap();
        let f = StateField::from_fn(g, |w| (3.0 * w).sin() + w * w).unwrap();
        let whole = h1(&f, (0.0, 1.0)).unwrap().powi(2);
        let split = h1(&f, (0.0, 0.4)).unwrap().powi(2) + h1(&f, (0.4, 1.0)).unwrap().powi(2);
        assert!((whole - split).abs() < 10.0 * g.h());
    }

    #[test]
    fn bad_intervals() {
        let g = SpatialGrid::new(1.0, 0.1).unwrap();
        let f = StateField::zeros(g);
        assert!(l2(&f, (0.5, 0.2)).is_err());
        assert!(l2(&f, (0.0, 1.5)).is_err());
        assert!(h1(&f, (0.31, 0.39)).is_err());
    }

    #[test]
    fn weighted_indicator_single_slice() {
        let g = SpatialGrid::new(2.0, 1e-5).unwrap();
        let eps1 = 0.6;
        let f = StateField::from_fn(g, |w| if w > eps1 && w <= eps1 + 1.0 { 1.0 } else { 0.0 }).unwrap();
        let traj = Trajectory::new(vec![0.0], vec![f], None).unwrap();
        let got = weighted_l2_spacetime(&traj, &WeightSpec::new(0.5, eps1).unwrap()).unwrap();
        // ∫₀¹ e^{s} ds = e - 1.
        let exact = (std::f64::consts::E - 1.0).sqrt();
        assert!((got - exact).abs() < 1e-4, "{got} vs {exact}");
    }

    #[test]
    fn weighted_translation_sensitivity() {
        let g = SpatialGrid::new(8.0, 1e-3).unwrap();
        let mu = 0.5;
        let make = |d: f64| {
            let f = StateField::from_fn(g, |w| if w > 1.0 + d && w <= 1.1 + d { 1.0 } else { 0.0 }).unwrap();
            Trajectory::new(vec![0.0], vec![f], None).unwrap()
        };
        let w = WeightSpec::new(mu, 0.6).unwrap();
        let base = weighted_l2_spacetime(&make(0.0), &w).unwrap();
        for d in [1.0, 2.5, 4.0] {
            let shifted = weighted_l2_spacetime(&make(d), &w).unwrap();
            let ratio = shifted / base;
            assert!((ratio / (mu * d).exp() - 1.0).abs() < 1e-2, "d = {d}: {ratio}");
        }
    }

    #[test]
    fn zero_rate_is_plain_spacetime_norm() {
        let g = SpatialGrid::new(1.0, 0.01).unwrap();
        let fields: Vec<_> = (0..5)
            .map(|k| StateField::from_fn(g, |w| (w + k as f64).cos()).unwrap())
            .collect();
        let traj = Trajectory::new((0..5).map(|k| k as f64 * 0.1).collect(), fields, None).unwrap();
        let a = weighted_l2_spacetime(&traj, &WeightSpec::new(0.0, 0.6).unwrap()).unwrap();
        let b = spacetime_l2(&traj).unwrap();
        assert_eq!(a, b);
        let manual: f64 = {
            let s: Vec<f64> = traj.fields.iter().map(|f| l2(f, (0.0, 1.0)).unwrap().powi(2)).collect();
            (0.1 * (0.5 * s[0] + s[1] + s[2] + s[3] + 0.5 * s[4])).sqrt()
        };
        assert!((a - manual).abs() < 1e-14);
    }

    #[test]
    fn empty_trajectory_rejected() {
        assert!(matches!(
            Trajectory::new(vec![], vec![], None),
            Err(ChainError::EmptyTrajectory)
        ));
    }

    proptest::proptest! {
        #[test]
        fn norm_axioms(seed in 0u64..500, s in -5.0f64..5.0) {
            let g = SpatialGrid::new(3.0, 0.03).unwrap();
            let phase = seed as f64 * 0.37;
            let f = StateField::from_fn(g, |w| (w * 2.1 + phase).sin()).unwrap();
            let k = StateField::from_fn(g, |w| (w * w - phase).cos()).unwrap();
            let sum = f.zip_with(&k, |a, b| a + b).unwrap();
            let iv = (0.0, 3.0);
            for norm in [l2, h1] {
                let nf = norm(&f, iv).unwrap();
                let nk = norm(&k, iv).unwrap();
                proptest::prop_assert!(norm(&sum, iv).unwrap() <= nf + nk + 1e-12);
                proptest::prop_assert!((norm(&f.scaled(s), iv).unwrap() - s.abs() * nf).abs() <= 1e-12 * (1.0 + nf));
            }
            proptest::prop_assert!(h1(&f, iv).unwrap() >= l2(&f, iv).unwrap());
            let tf = Trajectory::new(vec![0.0, 0.5], vec![f.clone(), k.clone()], None).unwrap();
            let tk = Trajectory::new(vec![0.0, 0.5], vec![k.clone(), f.clone()], None).unwrap();
            let tsum = Trajectory::new(vec![0.0, 0.5], vec![sum.clone(), sum.clone()], None).unwrap();
            let w = WeightSpec::new(0.5, 0.6).unwrap();
            let a = weighted_l2_spacetime(&tf, &w).unwrap();
            let b = weighted_l2_spacetime(&tk, &w).unwrap();
            proptest::prop_assert!(weighted_l2_spacetime(&tsum, &w).unwrap() <= a + b + 1e-12);
        }
    }
}
