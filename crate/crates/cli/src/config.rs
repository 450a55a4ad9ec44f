//! Experiment specification: TOML file, command-line overrides, defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use tchain_core::io::{read_field_file, read_layout_file};
use tchain_core::{bump_initial, ChainLayout, SpatialGrid, StateField};

pub const DEFAULT_LENGTH: f64 = 10.0;
pub const DEFAULT_VELOCITY: f64 = 2.0;
pub const DEFAULT_H: f64 = 0.01;
pub const DEFAULT_HORIZON: f64 = 5.0;
pub const DEFAULT_ALPHA: f64 = 0.156;
pub const DEFAULT_MU: f64 = 0.5;
pub const DEFAULT_BUMP: (f64, f64) = (0.6, 0.8);
pub const DEFAULT_LENGTHS: [f64; 5] = [2.0, 4.0, 6.0, 8.0, 10.0];

/// Where the access points come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    /// `(0, L/2, L)`.
    Midpoint,
    /// `a_i = i · gap`.
    Equidistant(f64),
    File(PathBuf),
}

impl Scenario {
    /// Parses `midpoint`, `equidistant:<gap>` or a path.
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        if s == "midpoint" {
            return Ok(Scenario::Midpoint);
        }
        if s == "equidistant" {
            return Ok(Scenario::Equidistant(1.0));
        }
        if let Some(gap) = s.strip_prefix("equidistant:") {
            let gap: f64 = gap.parse().with_context(|| format!("bad gap in {s:?}"))?;
            if !(gap.is_finite() && gap > 0.0) {
                bail!("gap must be > 0 in {s:?}");
            }
            return Ok(Scenario::Equidistant(gap));
        }
        Ok(Scenario::File(PathBuf::from(s)))
    }

    pub fn name(&self) -> String {
        match self {
            Scenario::Midpoint => "midpoint".into(),
            Scenario::Equidistant(_) => "equidistant".into(),
            Scenario::File(p) => p.display().to_string(),
        }
    }

    pub fn layout(&self, length: f64, velocity: f64) -> anyhow::Result<ChainLayout> {
        Ok(match self {
            Scenario::Midpoint => ChainLayout::midpoint(length, velocity)?,
            Scenario::Equidistant(gap) => ChainLayout::equidistant(*gap, length, velocity)?,
            Scenario::File(path) => {
                read_layout_file(path, length, velocity).with_context(|| format!("layout file {}", path.display()))?
            }
        })
    }
}

/// Initial perturbation.
#[derive(Debug, Clone, PartialEq)]
pub enum X0Spec {
    Bump { eps1: f64, eps2: f64 },
    File(PathBuf),
}

impl X0Spec {
    /// Parses `bump:ε₁,ε₂` or a path.
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        if let Some(args) = s.strip_prefix("bump:") {
            let parts: Vec<&str> = args.split(',').collect();
            if parts.len() != 2 {
                bail!("expected bump:ε1,ε2, got {s:?}");
            }
            let eps1 = parts[0].trim().parse().with_context(|| format!("bad ε1 in {s:?}"))?;
            let eps2 = parts[1].trim().parse().with_context(|| format!("bad ε2 in {s:?}"))?;
            return Ok(X0Spec::Bump { eps1, eps2 });
        }
        if s == "bump" {
            return Ok(X0Spec::Bump {
                eps1: DEFAULT_BUMP.0,
                eps2: DEFAULT_BUMP.1,
            });
        }
        Ok(X0Spec::File(PathBuf::from(s)))
    }

    pub fn field(&self, grid: &SpatialGrid) -> anyhow::Result<StateField> {
        Ok(match self {
            X0Spec::Bump { eps1, eps2 } => bump_initial(*eps1, *eps2, grid)?,
            X0Spec::File(path) => read_field_file(path, grid).with_context(|| format!("field file {}", path.display()))?,
        })
    }

    /// Center of the spatial weight: the bump peak, else the origin.
    pub fn center(&self) -> f64 {
        match self {
            X0Spec::Bump { eps1, .. } => *eps1,
            X0Spec::File(_) => 0.0,
        }
    }
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub length: f64,
    pub velocity: f64,
    pub h: f64,
    /// `None` means `h / c`.
    pub tau: Option<f64>,
    pub alpha: f64,
    pub horizon: f64,
    pub x0: X0Spec,
    pub lengths: Vec<f64>,
    pub mu: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::Equidistant(1.0),
            length: DEFAULT_LENGTH,
            velocity: DEFAULT_VELOCITY,
            h: DEFAULT_H,
            tau: None,
            alpha: DEFAULT_ALPHA,
            horizon: DEFAULT_HORIZON,
            x0: X0Spec::Bump {
                eps1: DEFAULT_BUMP.0,
                eps2: DEFAULT_BUMP.1,
            },
            lengths: DEFAULT_LENGTHS.to_vec(),
            mu: DEFAULT_MU,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentSpec {
    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(self.h / self.velocity)
    }

    pub fn layout(&self) -> anyhow::Result<ChainLayout> {
        self.scenario.layout(self.length, self.velocity)
    }

    pub fn grid(&self) -> anyhow::Result<SpatialGrid> {
        Ok(SpatialGrid::new(self.length, self.h)?)
    }

    pub fn initial(&self) -> anyhow::Result<StateField> {
        self.x0.field(&self.grid()?)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for (name, v) in [("L", self.length), ("c", self.velocity), ("h", self.h), ("T", self.horizon), ("alpha", self.alpha)] {
            if !(v.is_finite() && v > 0.0) {
                bail!("{name} must be > 0, got {v}");
            }
        }
        if let Some(tau) = self.tau {
            if !(tau.is_finite() && tau > 0.0) {
                bail!("tau must be > 0, got {tau}");
            }
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            bail!("mu must be >= 0, got {}", self.mu);
        }
        if self.lengths.is_empty() {
            bail!("L list is empty");
        }
        if self.lengths.windows(2).any(|w| w[1] <= w[0]) || self.lengths[0] <= 0.0 {
            bail!("L list must be positive and strictly increasing: {:?}", self.lengths);
        }
        if let Scenario::File(p) = &self.scenario {
            if !p.exists() {
                bail!("layout file {} does not exist", p.display());
            }
        }
        if let X0Spec::File(p) = &self.x0 {
            if !p.exists() {
                bail!("initial data file {} does not exist", p.display());
            }
        }
        Ok(())
    }
}

/// On-disk config: `[layout]`, `[solver]` and `[experiment]` tables.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub layout: LayoutSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSection {
    /// `midpoint`, `equidistant:<gap>` or a path relative to the config file.
    pub scenario: Option<String>,
    #[serde(rename = "L")]
    pub length: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub h: Option<f64>,
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub x0: Option<String>,
    #[serde(rename = "L_list")]
    pub lengths: Option<Vec<f64>>,
    pub mu: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ConfigFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        // Relative paths inside the file are resolved against its directory.
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |s: &mut Option<String>, keep: &dyn Fn(&str) -> bool| {
            if let Some(v) = s.as_mut() {
                if !keep(v) && Path::new(v.as_str()).is_relative() {
                    *v = base.join(v.as_str()).display().to_string();
                }
            }
        };
        rebase(&mut cfg.layout.scenario, &|v| v == "midpoint" || v.starts_with("equidistant"));
        rebase(&mut cfg.experiment.x0, &|v| v.starts_with("bump"));
        if let Some(dir) = cfg.experiment.out_dir.as_mut() {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }
}

/// Command-line values; every field overrides the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub layout: Option<String>,
    pub length: Option<f64>,
    pub velocity: Option<f64>,
    pub h: Option<f64>,
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub horizon: Option<f64>,
    pub x0: Option<String>,
    pub lengths: Option<Vec<f64>>,
    pub mu: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// Merges defaults, then the config file, then the overrides.
pub fn resolve(file: Option<&ConfigFile>, cli: &Overrides) -> anyhow::Result<ExperimentSpec> {
    let d = ExperimentSpec::default();
    let f = file.cloned().unwrap_or_default();
    let scenario = match cli.layout.as_deref().or(f.layout.scenario.as_deref()) {
        Some(s) => Scenario::parse(s)?,
        None => d.scenario,
    };
    let x0 = match cli.x0.as_deref().or(f.experiment.x0.as_deref()) {
        Some(s) => X0Spec::parse(s)?,
        None => d.x0,
    };
    let spec = ExperimentSpec {
        scenario,
        length: cli.length.or(f.layout.length).unwrap_or(d.length),
        velocity: cli.velocity.or(f.layout.c).unwrap_or(d.velocity),
        h: cli.h.or(f.solver.h).unwrap_or(d.h),
        tau: cli.tau.or(f.solver.tau),
        alpha: cli.alpha.or(f.solver.alpha).unwrap_or(d.alpha),
        horizon: cli.horizon.or(f.solver.horizon).unwrap_or(d.horizon),
        x0,
        lengths: cli.lengths.clone().or(f.experiment.lengths).unwrap_or(d.lengths),
        mu: cli.mu.or(f.experiment.mu).unwrap_or(d.mu),
        seed: cli.seed.or(f.experiment.seed).unwrap_or(d.seed),
        out_dir: cli.out_dir.clone().or(f.experiment.out_dir).unwrap_or(d.out_dir),
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_forms() {
        assert_eq!(Scenario::parse("midpoint").unwrap(), Scenario::Midpoint);
        assert_eq!(Scenario::parse("equidistant:2.5").unwrap(), Scenario::Equidistant(2.5));
        assert!(Scenario::parse("equidistant:-1").is_err());
        assert_eq!(Scenario::parse("a.txt").unwrap(), Scenario::File("a.txt".into()));
    }

    #[test]
    fn x0_forms() {
        assert_eq!(X0Spec::parse("bump:0.6, 0.8").unwrap(), X0Spec::Bump { eps1: 0.6, eps2: 0.8 });
        assert!(X0Spec::parse("bump:1").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file: ConfigFile = toml::from_str(
            "[layout]\nscenario = \"midpoint\"\nL = 4.0\n[solver]\nh = 0.05\nalpha = 1.0\n[experiment]\nmu = 0.0\nL_list = [2.0, 4.0]\n",
        )
        .unwrap();
        let cli = Overrides {
            h: Some(0.1),
            ..Default::default()
        };
        let spec = resolve(Some(&file), &cli).unwrap();
        assert_eq!(spec.scenario, Scenario::Midpoint);
        assert_eq!(spec.length, 4.0);
        assert_eq!(spec.h, 0.1);
        assert_eq!(spec.alpha, 1.0);
        assert_eq!(spec.mu, 0.0);
        assert_eq!(spec.lengths, vec![2.0, 4.0]);
        assert_eq!(spec.velocity, DEFAULT_VELOCITY);
        assert_eq!(spec.tau(), 0.05);
    }

    #[test]
    fn bad_lists_rejected() {
        let cli = Overrides {
            lengths: Some(vec![4.0, 2.0]),
            ..Default::default()
        };
        assert!(resolve(None, &cli).is_err());
        assert!(toml::from_str::<ConfigFile>("[solver]\nfoo = 1\n").is_err());
    }
}
