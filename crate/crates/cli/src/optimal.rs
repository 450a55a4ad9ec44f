//! `ocp`: one optimal control solve with state, adjoint and control exports.

use std::path::PathBuf;

use serde::Serialize;
use tchain_core::io::{write_control_csv, write_trajectory_csv};
use tchain_core::norms::{spacetime_l2, weighted_l2_spacetime};
use tchain_core::ocp::{self, OcpConfig, OcpSolution};
use tchain_core::{LayoutSpec, WeightSpec};

use crate::config::ExperimentSpec;
use crate::output;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolutionNorms {
    pub mu: f64,
    pub center: f64,
    pub state_weighted: f64,
    pub costate_weighted: f64,
    pub state_l2: f64,
    pub costate_l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OcpReport {
    pub cost: f64,
    pub tracking: f64,
    pub control_energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub alpha: f64,
    pub h: f64,
    pub tau: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub scenario: String,
    pub layout: LayoutSpec,
    pub norms: SolutionNorms,
    pub files: Vec<PathBuf>,
}

pub fn config_for(spec: &ExperimentSpec) -> anyhow::Result<OcpConfig> {
    let layout = spec.layout()?;
    let x0 = spec.initial()?;
    Ok(OcpConfig::new(layout, x0, spec.horizon, spec.alpha, spec.tau())?)
}

/// Weighted and plain space-time norms of state and costate.
pub fn solution_norms(solution: &OcpSolution, mu: f64, center: f64) -> anyhow::Result<SolutionNorms> {
    let w = WeightSpec::new(mu, center)?;
    Ok(SolutionNorms {
        mu,
        center,
        state_weighted: weighted_l2_spacetime(&solution.state, &w)?,
        costate_weighted: weighted_l2_spacetime(&solution.costate, &w)?,
        state_l2: spacetime_l2(&solution.state)?,
        costate_l2: spacetime_l2(&solution.costate)?,
    })
}

pub fn run_ocp(spec: &ExperimentSpec) -> anyhow::Result<OcpReport> {
    let config = config_for(spec)?;
    let solution = ocp::solve(&config)?;
    let dir = &spec.out_dir;
    let mut files = Vec::new();
    let (w, p) = output::create(dir, "state.csv")?;
    write_trajectory_csv(&solution.state, w)?;
    files.push(p);
    let (w, p) = output::create(dir, "adjoint.csv")?;
    write_trajectory_csv(&solution.costate, w)?;
    files.push(p);
    let (w, p) = output::create(dir, "control.csv")?;
    write_control_csv(&solution.control, w)?;
    files.push(p);
    files.push(dir.join("summary.json"));
    let report = OcpReport {
        cost: solution.cost,
        tracking: solution.tracking,
        control_energy: solution.control_energy,
        residual: solution.residual,
        iterations: solution.iterations,
        alpha: config.alpha,
        h: config.h(),
        tau: config.tau,
        horizon: config.horizon,
        scenario: spec.scenario.name(),
        layout: config.layout.to_spec(),
        norms: solution_norms(&solution, spec.mu, spec.x0.center())?,
        files,
    };
    output::json(dir, "summary.json", &report)?;
    Ok(report)
}
