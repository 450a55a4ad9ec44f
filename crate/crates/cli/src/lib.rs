//! Experiments on controlled transport chains: closed-loop simulation, optimal
//! control, the domain-size sweep, stabilizability checks and oracle suites.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tchain_core::Coupling;

pub mod check;
pub mod config;
pub mod optimal;
pub mod output;
pub mod simulate;
pub mod sweep;
pub mod validate;

use config::{resolve, ConfigFile, ExperimentSpec, Overrides};

/// `println!` that ignores a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "TCHAIN_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "tchain", version, about = "Controlled transport chains: simulation, optimal control, sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-loop feedback or uncontrolled run with an envelope report.
    Simulate(SimulateArgs),
    /// Solve the LQ optimal control problem.
    Ocp(OcpArgs),
    /// Weighted norms against domain length for both scenarios.
    Sweep(SweepArgs),
    /// Stabilizability verdict and counterexample certificate.
    Check(CheckArgs),
    /// Run the oracle suites; exit status 1 if any fails.
    Validate(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML config with [layout], [solver] and [experiment] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `midpoint`, `equidistant:<gap>` or a layout file.
    #[arg(long)]
    pub layout: Option<String>,
    /// Domain length.
    #[arg(long = "L")]
    pub length: Option<f64>,
    /// Transport velocity.
    #[arg(long = "c")]
    pub velocity: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
    /// Horizon.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// `bump:ε1,ε2` or a field file (CSV or JSON).
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Bc {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ControlArg {
    Feedback,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "dirichlet")]
    pub bc: Bc,
    #[arg(long, value_enum, default_value = "feedback")]
    pub control: ControlArg,
    #[arg(long, value_enum, default_value = "csv")]
    pub out: Format,
    /// Keep every n-th time slice in the trajectory file.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct OcpArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Weight rate of the reported norms.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Only CSV is supported; the summary is always JSON.
    #[arg(long, value_enum, default_value = "csv")]
    pub out: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Comma-separated, strictly increasing domain lengths.
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Declared gap bound L₀.
    #[arg(long)]
    pub bound: Option<f64>,
    /// Envelope constant M to refute (needs --k).
    #[arg(long = "M", requires = "k")]
    pub m: Option<f64>,
    #[arg(long, requires = "m")]
    pub k: Option<f64>,
    /// Width of the certificate's initial support.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
}

/// How a run ended when no error occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ValidationFailed,
}

/// Errors split by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files (exit 2).
    Usage(anyhow::Error),
    /// A solver or I/O failure (exit 1).
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) => write!(f, "usage error: {e:#}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

fn spec_from(common: &CommonArgs, extra: Overrides) -> Result<ExperimentSpec, CliError> {
    let file = match &common.config {
        Some(p) => Some(ConfigFile::load(p).map_err(CliError::Usage)?),
        None => None,
    };
    let overrides = Overrides {
        layout: common.layout.clone(),
        length: common.length,
        velocity: common.velocity,
        h: common.h,
        horizon: common.horizon,
        x0: common.x0.clone(),
        seed: common.seed,
        out_dir: common.out_dir.clone(),
        ..extra
    };
    let spec = resolve(file.as_ref(), &overrides).map_err(CliError::Usage)?;
    // Layout and initial data are inputs: failing to build them is a usage error.
    spec.layout().map_err(CliError::Usage)?;
    spec.initial().map_err(CliError::Usage)?;
    Ok(spec)
}

/// Runs one parsed command, printing a short summary to stdout.
pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let rt = CliError::Runtime;
    match cli.command {
        Command::Simulate(a) => {
            let spec = spec_from(&a.common, Overrides { tau: a.tau, ..Default::default() })?;
            let opts = simulate::SimulateOptions {
                coupling: match a.bc {
                    Bc::Dirichlet => Coupling::Dirichlet,
                    Bc::Neumann => Coupling::Neumann,
                },
                control: match a.control {
                    ControlArg::Feedback => simulate::ControlMode::Feedback,
                    ControlArg::None => simulate::ControlMode::None,
                },
                format: match a.out {
                    Format::Csv => simulate::OutFormat::Csv,
                    Format::Json => simulate::OutFormat::Json,
                },
                stride: a.stride,
            };
            let r = simulate::run_simulate(&spec, &opts).map_err(rt)?;
            say!(
                "simulate {} / {}: ‖x0‖ = {:.6e}, ‖x(T)‖ = {:.6e}, extinction {}",
                r.bc,
                r.control,
                r.initial_norm,
                r.final_norm,
                r.extinction_time.map_or("none".into(), |t| format!("at t = {t}")),
            );
            if let Some(env) = r.envelope {
                say!("envelope ratio {:.6} ({})", env.max_ratio, if env.passed { "pass" } else { "fail" });
            }
            Ok(Outcome::Success)
        }
        Command::Ocp(a) => {
            if matches!(a.out, Format::Json) {
                return Err(CliError::Usage(anyhow::anyhow!("ocp writes CSV trajectories; the summary is always JSON")));
            }
            let spec = spec_from(
                &a.common,
                Overrides {
                    alpha: a.alpha,
                    tau: a.tau,
                    mu: a.mu,
                    ..Default::default()
                },
            )?;
            let r = optimal::run_ocp(&spec).map_err(rt)?;
            say!(
                "ocp: cost = {:.10e}, KKT residual = {:.3e}, {} iterations, weighted state norm = {:.6e}",
                r.cost, r.residual, r.iterations, r.norms.state_weighted
            );
            Ok(Outcome::Success)
        }
        Command::Sweep(a) => {
            let spec = spec_from(
                &a.common,
                Overrides {
                    alpha: a.alpha,
                    tau: a.tau,
                    mu: a.mu,
                    lengths: a.lengths.clone(),
                    ..Default::default()
                },
            )?;
            if spec.lengths.len() < 3 {
                return Err(CliError::Usage(anyhow::anyhow!("a sweep needs at least 3 lengths")));
            }
            let r = sweep::run_sweep(&spec).map_err(rt)?;
            for p in &r.points {
                say!("L = {:>5} {:<12} state {:.6e} costate {:.6e}", p.length, p.scenario, p.state_norm, p.costate_norm);
            }
            let c = &r.classification;
            say!(
                "plateau ratio {:.4} ({}), growth ratio {:.4} ({})",
                c.plateau.ratio,
                if c.plateau.passed { "pass" } else { "fail" },
                c.growth.ratio,
                if c.growth.passed { "pass" } else { "fail" },
            );
            Ok(Outcome::Success)
        }
        Command::Check(a) => {
            let spec = spec_from(&a.common, Overrides::default())?;
            let opts = check::CheckOptions {
                bound: a.bound,
                envelope: a.m.zip(a.k),
                eps: a.eps,
            };
            let r = check::run_check(&spec, &opts).map_err(rt)?;
            say!("{}", serde_json::to_string_pretty(&r).map_err(|e| rt(e.into()))?);
            Ok(Outcome::Success)
        }
        Command::Validate(common) => {
            let spec = spec_from(&common, Overrides::default())?;
            let r = validate::run_validate(&spec).map_err(rt)?;
            for s in &r.suites {
                say!(
                    "{} {:<22} measured {:.3e} tolerance {:.3e}  {}",
                    if s.passed { "PASS" } else { "FAIL" },
                    s.name,
                    s.measured,
                    s.tolerance,
                    s.detail
                );
            }
            Ok(if r.passed { Outcome::Success } else { Outcome::ValidationFailed })
        }
    }
}
