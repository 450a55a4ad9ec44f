//! `simulate`: closed-loop feedback or uncontrolled runs with an envelope report.

use std::path::PathBuf;

use serde::Serialize;
use tchain_core::feedback::{
    dirichlet_closed_loop, envelope_check, neumann_closed_loop, subdomain_envelope_check, EnvelopeReport,
    SubdomainEnvelopeReport, SubdomainRhs,
};
use tchain_core::io::{write_json, write_trajectory_csv};
use tchain_core::mild::{self, OpenLoopProblem};
use tchain_core::norms::{l2, NormKind};
use tchain_core::{ControlSignal, Coupling, DecayConstants, LayoutSpec, TimeGrid, Trajectory};

use crate::config::ExperimentSpec;
use crate::output;

/// Relative norm below which a state counts as extinct.
pub const EXTINCTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    Feedback,
    None,
}

impl ControlMode {
    pub fn name(self) -> &'static str {
        match self {
            ControlMode::Feedback => "feedback",
            ControlMode::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy)]
pub struct SimulateOptions {
    pub coupling: Coupling,
    pub control: ControlMode,
    pub format: OutFormat,
    /// Write every `stride`-th time slice.
    pub stride: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub bc: &'static str,
    pub control: &'static str,
    pub scenario: String,
    pub layout: LayoutSpec,
    pub h: f64,
    pub tau: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub initial_norm: f64,
    pub final_norm: f64,
    /// First stored time from which `‖x(t)‖ <= 1e-10 ‖x₀‖` holds for good.
    pub extinction_time: Option<f64>,
    /// Time by which the state must vanish, when the setting guarantees it.
    pub extinction_bound: Option<f64>,
    pub decay: Option<DecayConstants>,
    pub envelope: Option<EnvelopeReport>,
    pub subdomain_envelope: Option<SubdomainEnvelopeReport>,
    pub files: Vec<PathBuf>,
}

/// First time after which every stored norm stays below `tol · norms[0]`.
pub fn extinction_time(times: &[f64], norms: &[f64], tol: f64) -> Option<f64> {
    let limit = tol * norms.first().copied().unwrap_or(0.0);
    let last_alive = norms.iter().rposition(|&n| n > limit);
    match last_alive {
        None => times.first().copied(),
        Some(k) if k + 1 < times.len() => Some(times[k + 1]),
        Some(_) => None,
    }
}

pub fn run_simulate(spec: &ExperimentSpec, opts: &SimulateOptions) -> anyhow::Result<SimulateReport> {
    let layout = spec.layout()?;
    let x0 = spec.initial()?;
    let grid = TimeGrid::covering(spec.horizon, spec.tau())?;
    let slack = 1.0 + 10.0 * spec.h;
    let (trajectory, decay, envelope, subdomain_envelope, extinction_bound) = match (opts.control, opts.coupling) {
        (ControlMode::Feedback, Coupling::Dirichlet) => {
            let run = dirichlet_closed_loop(&layout, &x0, &grid)?;
            let d = *run.envelope();
            let env = envelope_check(&run, d.m, d.k, NormKind::L2, slack)?;
            let bound = 2.0 * layout.max_gap() / layout.velocity();
            (run.trajectory().clone(), Some(d), Some(env), None, Some(bound))
        }
        (ControlMode::Feedback, Coupling::Neumann) => {
            let run = neumann_closed_loop(&layout, &x0, &grid)?;
            let d = *run.envelope();
            let env = envelope_check(&run, d.m, d.k, NormKind::H1, slack)?;
            let sub = subdomain_envelope_check(&run, d.m, d.k, SubdomainRhs::DependenceDomain, slack)?;
            (run.trajectory().clone(), Some(d), Some(env), Some(sub), None)
        }
        (ControlMode::None, coupling) => {
            let control = ControlSignal::zeros(layout.n_l(), &grid);
            let problem = OpenLoopProblem::new(layout.clone(), x0.clone(), coupling, control)?;
            let tr = mild::trajectory(&problem, &grid.times())?;
            let bound = (coupling == Coupling::Dirichlet).then(|| layout.length() / layout.velocity());
            (tr, None, None, None, bound)
        }
    };
    let norms = trajectory
        .fields
        .iter()
        .map(|f| l2(f, (0.0, layout.length())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut files = Vec::new();
    let thinned = thin(&trajectory, opts.stride.max(1))?;
    match opts.format {
        OutFormat::Csv => {
            let (w, path) = output::create(&spec.out_dir, "trajectory.csv")?;
            write_trajectory_csv(&thinned, w)?;
            files.push(path);
        }
        OutFormat::Json => {
            let (w, path) = output::create(&spec.out_dir, "trajectory.json")?;
            write_json(&thinned.to_spec(), w)?;
            files.push(path);
        }
    }
    let mut report = SimulateReport {
        bc: opts.coupling.name(),
        control: opts.control.name(),
        scenario: spec.scenario.name(),
        layout: layout.to_spec(),
        h: spec.h,
        tau: grid.tau,
        horizon: grid.horizon(),
        initial_norm: norms[0],
        final_norm: *norms.last().expect("nonempty"),
        extinction_time: extinction_time(&trajectory.times, &norms, EXTINCTION_TOL),
        extinction_bound,
        decay,
        envelope,
        subdomain_envelope,
        files,
    };
    let report_path = spec.out_dir.join("report.json");
    report.files.push(report_path);
    output::json(&spec.out_dir, "report.json", &report)?;
    Ok(report)
}

fn thin(trajectory: &Trajectory, stride: usize) -> anyhow::Result<Trajectory> {
    if stride == 1 {
        return Ok(trajectory.clone());
    }
    let keep: Vec<usize> = (0..trajectory.len()).step_by(stride).collect();
    Ok(Trajectory::new(
        keep.iter().map(|&k| trajectory.times[k]).collect(),
        keep.iter().map(|&k| trajectory.fields[k].clone()).collect(),
        trajectory.control.clone(),
    )?)
}
