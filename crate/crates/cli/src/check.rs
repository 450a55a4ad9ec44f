//! `check`: stabilizability verdict and, given `(M, k)`, a counterexample.

use std::path::PathBuf;

use serde::Serialize;
use tchain_core::stabilizability::{certificate_length, gap_criterion_layout, interval_scan, worst_case_certificate};
use tchain_core::{Certificate, GapReport, LayoutSpec};

use crate::config::ExperimentSpec;
use crate::output;

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    /// Declared bound on the gaps.
    pub bound: Option<f64>,
    /// Envelope constants to refute.
    pub envelope: Option<(f64, f64)>,
    pub eps: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub scenario: String,
    pub layout: LayoutSpec,
    pub gap: GapReport,
    /// Exhaustive interval scan at the same bound.
    pub interval_scan: bool,
    pub criteria_agree: bool,
    pub certificate_length: Option<f64>,
    pub certificate: Option<Certificate>,
    pub certificate_error: Option<String>,
    pub files: Vec<PathBuf>,
}

pub fn run_check(spec: &ExperimentSpec, opts: &CheckOptions) -> anyhow::Result<CheckReport> {
    let layout = spec.layout()?;
    let gap = gap_criterion_layout(&layout, opts.bound)?;
    let scan = interval_scan(layout.access_points(), layout.n_l(), opts.bound.unwrap_or(gap.max_gap))?;
    let (certificate_length, certificate, certificate_error) = match opts.envelope {
        Some((m, k)) => {
            let l0 = certificate_length(m, k, layout.velocity())?;
            match worst_case_certificate(l0, opts.eps, &layout, m, k) {
                Ok(c) => (Some(l0), Some(c), None),
                Err(e) => (Some(l0), None, Some(e.to_string())),
            }
        }
        None => (None, None, None),
    };
    let report = CheckReport {
        scenario: spec.scenario.name(),
        layout: layout.to_spec(),
        criteria_agree: scan == gap.stabilizable,
        gap,
        interval_scan: scan,
        certificate_length,
        certificate,
        certificate_error,
        files: vec![spec.out_dir.join("check.json")],
    };
    output::json(&spec.out_dir, "check.json", &report)?;
    Ok(report)
}
