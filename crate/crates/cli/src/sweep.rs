//! `sweep`: weighted state/costate norms against the domain length for the
//! midpoint and equidistant scenarios.
//!
//! Points are solved on the rayon pool; all files are written afterwards by the
//! calling thread, in a fixed order, so outputs are byte-identical across runs.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use tchain_core::ocp::{self, OcpConfig};

use crate::config::{ExperimentSpec, Scenario};
use crate::optimal::solution_norms;
use crate::output;

/// `value(L_max) / value(L_ref)` must stay below this for a plateau.
pub const PLATEAU_RATIO: f64 = 1.1;
/// `value(L_max) / value(L_min)` must reach this for growth.
pub const GROWTH_RATIO: f64 = 2.0;
/// Both scenarios on the same layout must agree to this.
pub const COINCIDENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    #[serde(rename = "L")]
    pub length: f64,
    pub scenario: String,
    pub access_points: Vec<f64>,
    pub state_norm: f64,
    pub costate_norm: f64,
    pub cost: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlateauCheck {
    pub reference_length: f64,
    pub last_length: f64,
    pub ratio: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthCheck {
    pub strictly_increasing: bool,
    pub ratio: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoincidenceCheck {
    #[serde(rename = "L")]
    pub length: f64,
    pub state_diff: f64,
    pub costate_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    /// Equidistant scenario levels off.
    pub plateau: PlateauCheck,
    /// Midpoint scenario keeps growing.
    pub growth: GrowthCheck,
    /// Lengths at which both scenarios produce the same layout.
    pub coincidence: Vec<CoincidenceCheck>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub alpha: f64,
    pub mu: f64,
    pub center: f64,
    pub h: f64,
    pub velocity: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub gap: f64,
    pub lengths: Vec<f64>,
    pub points: Vec<SweepPoint>,
    pub classification: Classification,
    pub files: Vec<PathBuf>,
}

/// Gap used for the equidistant scenario.
fn equidistant_gap(spec: &ExperimentSpec) -> f64 {
    match spec.scenario {
        Scenario::Equidistant(g) => g,
        _ => 1.0,
    }
}

/// Solves every `(scenario, L)` pair, midpoint first, lengths ascending.
pub fn sweep_points(spec: &ExperimentSpec) -> anyhow::Result<Vec<SweepPoint>> {
    let gap = equidistant_gap(spec);
    let jobs: Vec<(Scenario, f64)> = [Scenario::Midpoint, Scenario::Equidistant(gap)]
        .into_iter()
        .flat_map(|s| spec.lengths.iter().map(move |&l| (s.clone(), l)))
        .collect();
    jobs.par_iter()
        .map(|(scenario, length)| {
            let mut local = spec.clone();
            local.length = *length;
            local.scenario = scenario.clone();
            let layout = local.layout()?;
            let x0 = local.initial()?;
            let config = OcpConfig::new(layout.clone(), x0, local.horizon, local.alpha, local.tau())?;
            let solution = ocp::solve(&config)?;
            let norms = solution_norms(&solution, spec.mu, spec.x0.center())?;
            Ok(SweepPoint {
                length: *length,
                scenario: scenario.name(),
                access_points: layout.access_points().to_vec(),
                state_norm: norms.state_weighted,
                costate_norm: norms.costate_weighted,
                cost: solution.cost,
                residual: solution.residual,
                iterations: solution.iterations,
            })
        })
        .collect()
}

fn series<'a>(points: &'a [SweepPoint], scenario: &str) -> Vec<&'a SweepPoint> {
    points.iter().filter(|p| p.scenario == scenario).collect()
}

/// Plateau of the equidistant curve against the smallest `L >= 0.6 L_max`,
/// growth of the midpoint curve, and agreement where the layouts coincide.
pub fn classify(points: &[SweepPoint]) -> Classification {
    let eq = series(points, "equidistant");
    let mid = series(points, "midpoint");
    let plateau = match eq.last() {
        Some(last) => {
            let reference = eq
                .iter()
                .find(|p| p.length >= 0.6 * last.length - 1e-12)
                .expect("last point qualifies");
            let ratio = last.state_norm / reference.state_norm;
            PlateauCheck {
                reference_length: reference.length,
                last_length: last.length,
                ratio,
                threshold: PLATEAU_RATIO,
                passed: ratio <= PLATEAU_RATIO,
            }
        }
        None => PlateauCheck {
            reference_length: f64::NAN,
            last_length: f64::NAN,
            ratio: f64::NAN,
            threshold: PLATEAU_RATIO,
            passed: false,
        },
    };
    let strictly_increasing = mid.windows(2).all(|w| w[1].state_norm > w[0].state_norm);
    let ratio = match (mid.first(), mid.last()) {
        (Some(a), Some(b)) => b.state_norm / a.state_norm,
        _ => f64::NAN,
    };
    let growth = GrowthCheck {
        strictly_increasing,
        ratio,
        threshold: GROWTH_RATIO,
        passed: strictly_increasing && ratio >= GROWTH_RATIO,
    };
    let coincidence: Vec<CoincidenceCheck> = mid
        .iter()
        .filter_map(|m| {
            let e = eq.iter().find(|e| e.length == m.length && e.access_points == m.access_points)?;
            let state_diff = (m.state_norm - e.state_norm).abs();
            let costate_diff = (m.costate_norm - e.costate_norm).abs();
            Some(CoincidenceCheck {
                length: m.length,
                state_diff,
                costate_diff,
                tolerance: COINCIDENCE_TOL,
                passed: state_diff <= COINCIDENCE_TOL && costate_diff <= COINCIDENCE_TOL,
            })
        })
        .collect();
    let passed = plateau.passed && growth.passed && coincidence.iter().all(|c| c.passed);
    Classification {
        plateau,
        growth,
        coincidence,
        passed,
    }
}

pub fn run_sweep(spec: &ExperimentSpec) -> anyhow::Result<SweepSummary> {
    if spec.lengths.len() < 3 {
        anyhow::bail!("a sweep needs at least 3 lengths, got {:?}", spec.lengths);
    }
    let points = sweep_points(spec)?;
    let classification = classify(&points);
    let (w, csv_path) = output::create(&spec.out_dir, "sweep.csv")?;
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["L", "scenario", "state_norm", "costate_norm"])?;
    for p in &points {
        writer.serialize((p.length, &p.scenario, p.state_norm, p.costate_norm))?;
    }
    writer.flush()?;
    let summary = SweepSummary {
        alpha: spec.alpha,
        mu: spec.mu,
        center: spec.x0.center(),
        h: spec.h,
        velocity: spec.velocity,
        horizon: spec.horizon,
        gap: equidistant_gap(spec),
        lengths: spec.lengths.clone(),
        points,
        classification,
        files: vec![csv_path, spec.out_dir.join("sweep.json")],
    };
    output::json(&spec.out_dir, "sweep.json", &summary)?;
    Ok(summary)
}
