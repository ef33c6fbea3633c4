//! TOML run configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use spotlab_core::pdesim::{Bump, InitialData, SimConfig};
use spotlab_core::{Domain2D, ModelParams};

pub const DEFAULT_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub model: ModelSection,
    #[serde(default)]
    pub domain: DomainSection,
    #[serde(default)]
    pub spots: SpotsSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub expect: Expectations,
}

fn default_name() -> String {
    "custom".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub chi1: f64,
    pub chi2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub ubar1: f64,
    pub ubar2: f64,
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    /// Continue past failed structural hypotheses.
    #[serde(default)]
    pub allow_override: bool,
}

impl ModelSection {
    pub fn from_params(p: ModelParams, allow_override: bool) -> Self {
        ModelSection {
            chi1: p.chi1,
            chi2: p.chi2,
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            ubar1: p.ubar1,
            ubar2: p.ubar2,
            a11: p.a11,
            a12: p.a12,
            a21: p.a21,
            a22: p.a22,
            allow_override,
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            chi1: self.chi1,
            chi2: self.chi2,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            ubar1: self.ubar1,
            ubar2: self.ubar2,
            a11: self.a11,
            a12: self.a12,
            a21: self.a21,
            a22: self.a22,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSection {
    Rectangle { x: [f64; 2], y: [f64; 2], nx: usize, ny: usize },
    Disk { center: [f64; 2], radius: f64, n: usize },
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection::Rectangle { x: [0.0, 2.0], y: [0.0, 2.0], nx: 128, ny: 128 }
    }
}

impl DomainSection {
    pub fn domain(&self) -> Result<Domain2D> {
        Ok(match *self {
            DomainSection::Rectangle { x, y, nx, ny } => Domain2D::rectangle(x, y, nx, ny)?,
            DomainSection::Disk { center, radius, n } => Domain2D::disk(center, radius, n)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpotsSection {
    /// Number of spots.
    pub m: usize,
    /// How many of them are interior.
    pub o: usize,
    /// Starting configuration for placement; the ansatz is built from the
    /// critical point reached from it. Random seeds are added on top.
    pub points: Option<Vec<[f64; 2]>>,
    /// Number of random placement seeds.
    pub seeds: usize,
    /// Include the `O(ε²)` logistic corrections in the ansatz.
    pub corrections: bool,
}

impl Default for SpotsSection {
    fn default() -> Self {
        SpotsSection { m: 1, o: 1, points: None, seeds: 4, corrections: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub dt: f64,
    pub t_end: f64,
    pub dv: [f64; 2],
    pub steady_tol: f64,
    /// Center of the Gaussian initial bumps.
    pub center: [f64; 2],
    pub u_amplitude: f64,
    pub v_amplitude: f64,
    pub rate: f64,
    pub offset: f64,
    /// Write a VTK snapshot every this many steps (0 disables).
    pub snapshot_every: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            dt: 0.1,
            t_end: 200.0,
            dv: [1.0, 1.0],
            steady_tol: 1e-7,
            center: [0.0, 0.0],
            u_amplitude: 6.0,
            v_amplitude: 2.0,
            rate: 10.0,
            offset: 0.1,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Model,
    Liouville,
    Sigma,
    Greens,
    Place,
    Ansatz,
    Simulate,
    Compare,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Model,
        Stage::Liouville,
        Stage::Sigma,
        Stage::Greens,
        Stage::Place,
        Stage::Ansatz,
        Stage::Simulate,
        Stage::Compare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Model => "model",
            Stage::Liouville => "liouville",
            Stage::Sigma => "sigma",
            Stage::Greens => "greens",
            Stage::Place => "place",
            Stage::Ansatz => "ansatz",
            Stage::Simulate => "simulate",
            Stage::Compare => "compare",
        }
    }

    /// Stages whose outputs this one reads.
    pub fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Model => &[],
            Stage::Liouville | Stage::Sigma | Stage::Greens | Stage::Simulate => &[Stage::Model],
            Stage::Place => &[Stage::Greens, Stage::Sigma],
            Stage::Ansatz => &[Stage::Place, Stage::Sigma],
            Stage::Compare => &[Stage::Ansatz, Stage::Simulate],
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Stage> {
        match Stage::ALL.into_iter().find(|st| st.name() == s) {
            Some(st) => Ok(st),
            None => bail!("unknown stage {s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub stages: Vec<Stage>,
    /// Points sampled on the σ arc scan (0 disables the scan).
    pub scan_points: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection { stages: Stage::ALL.to_vec(), scan_points: 0 }
    }
}

/// Declarative outcome checks. Every field is optional; unset checks are
/// skipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expectations {
    /// `σ1 = σ2 = value` within `sigma_tol`.
    pub sigma: Option<[f64; 2]>,
    pub sigma_tol: Option<f64>,
    /// Both cell maxima within one cell of this point.
    pub spot_at: Option<[f64; 2]>,
    /// Simulation reached the steady tolerance.
    pub steady: Option<bool>,
    /// Distance between the `u1` and `u2` maxima at least this large.
    pub min_separation: Option<f64>,
    /// Ansatz and simulated maxima at most this many cells apart.
    pub max_offset_cells: Option<f64>,
    /// Excess masses of ansatz and simulation within this factor.
    pub mass_factor: Option<f64>,
    /// Chemicals positive everywhere.
    pub positive_chemicals: Option<bool>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Config::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.params().check()?;
        self.domain.domain()?;
        if self.spots.m == 0 || self.spots.o > self.spots.m {
            bail!("spots: need m >= 1 and o <= m (m = {}, o = {})", self.spots.m, self.spots.o);
        }
        if let Some(p) = &self.spots.points {
            if p.len() != self.spots.m {
                bail!("spots.points has {} entries, expected m = {}", p.len(), self.spots.m);
            }
        }
        self.sim_config()?.validate()?;
        Ok(())
    }

    pub fn params(&self) -> ModelParams {
        self.model.params()
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = &self.simulation;
        let u = Bump { amplitude: s.u_amplitude, rate: s.rate, center: s.center, offset: s.offset };
        let v = Bump { amplitude: s.v_amplitude, ..u };
        Ok(SimConfig {
            domain: self.domain.domain()?,
            dt: s.dt,
            t_end: s.t_end,
            params: self.params(),
            dv: s.dv,
            initial: InitialData { u: [u; 2], v: [v; 2] },
            steady_tol: s.steady_tol,
        })
    }

    /// Smallest grid spacing, the "one cell" of the positional checks.
    pub fn cell(&self) -> Result<f64> {
        let h = self.domain.domain()?.spacing();
        Ok(h[0].max(h[1]))
    }
}
