//! Scenario files: TOML descriptions of experiment grids.
//!
//! See `docs/scenario.md` at the repository root for the full schema.

use serde::{Deserialize, Serialize};

use crate::control::{DisturbanceGen, DisturbanceKind, LinearSystem, LossSchedule};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

pub const DEFAULT_R_M: f64 = 2.0;
pub const DEFAULT_LAMBDA_GRID: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Known,
    Unknown,
    Sensitivity,
    Tradeoff,
    Diagnostics,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExperimentKind::Known => "known",
            ExperimentKind::Unknown => "unknown",
            ExperimentKind::Sensitivity => "sensitivity",
            ExperimentKind::Tradeoff => "tradeoff",
            ExperimentKind::Diagnostics => "diagnostics",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemGenerator {
    Random,
    Matrices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub generator: SystemGenerator,
    #[serde(default = "default_dx")]
    pub dx: usize,
    #[serde(default = "default_one")]
    pub du: usize,
    #[serde(default = "default_dy")]
    pub dy: usize,
    #[serde(default = "default_open_rho")]
    pub open_loop_rho: f64,
    #[serde(default = "default_target_rho")]
    pub target_rho: f64,
    /// Seed for the random plant; absent means the cell seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Vec<f64>>>,
}

fn default_dx() -> usize {
    3
}
fn default_one() -> usize {
    1
}
fn default_dy() -> usize {
    2
}
fn default_open_rho() -> f64 {
    0.9
}
fn default_target_rho() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    pub w_max: f64,
    pub e_max: f64,
    #[serde(default = "default_switch")]
    pub switch_period: f64,
}

fn default_switch() -> f64 {
    64.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Lqr,
    Tracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default = "default_unit")]
    pub q_y: f64,
    #[serde(default = "default_unit")]
    pub r_u: f64,
    #[serde(default = "default_target_radius")]
    pub target_radius: f64,
    #[serde(default = "default_period")]
    pub period: usize,
}

fn default_unit() -> f64 {
    1.0
}
fn default_target_radius() -> f64 {
    0.5
}
fn default_period() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub horizons: Vec<usize>,
    /// DRC memory; absent means `⌈ln T/(1 − ρ̂)⌉`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Markov truncation; absent means the same default as `m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    #[serde(default = "default_r_m")]
    pub r_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Exploration length; absent means `⌈h²√T (dy + du)⌉`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_explore: Option<usize>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default = "default_grid")]
    pub lambda_grid: usize,
    #[serde(default = "default_epoch_const")]
    pub epoch_const: f64,
}

fn default_r_m() -> f64 {
    DEFAULT_R_M
}
fn default_grid() -> usize {
    DEFAULT_LAMBDA_GRID
}
fn default_epoch_const() -> f64 {
    crate::tradeoff::DEFAULT_EPOCH_CONST
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Output path without extension; the CLI `--out` flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossSpec>,
    pub params: Params,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// TOML rendering of the scenario with every defaulted field filled in.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(format!("scenario {:?}: {msg}", self.id)));
        if self.id.is_empty() {
            return cfg("id must not be empty".into());
        }
        let p = &self.params;
        if p.horizons.is_empty() || p.horizons.contains(&0) {
            return cfg("params.horizons must be a nonempty list of positive integers".into());
        }
        if !(p.r_m > 0.0) || !p.r_m.is_finite() {
            return cfg(format!("params.r_m must be positive, got {}", p.r_m));
        }
        for (name, v) in [("eta", p.eta), ("lambda", p.lambda)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return cfg(format!("params.{name} must be positive, got {v}"));
                }
            }
        }
        if p.m == Some(0) || p.h == Some(0) {
            return cfg("params.m and params.h must be at least 1".into());
        }
        let needs_plant = matches!(self.kind, ExperimentKind::Known | ExperimentKind::Unknown | ExperimentKind::Sensitivity);
        if needs_plant && (self.system.is_none() || self.disturbance.is_none() || self.loss.is_none()) {
            return cfg("control experiments need [system], [disturbance] and [loss] sections".into());
        }
        if let Some(sys) = &self.system {
            if sys.generator == SystemGenerator::Matrices && (sys.a.is_none() || sys.b.is_none() || sys.c.is_none() || sys.k.is_none()) {
                return cfg("generator = \"matrices\" needs a, b, c and k".into());
            }
            if sys.generator == SystemGenerator::Random && (sys.dx == 0 || sys.du == 0 || sys.dy == 0) {
                return cfg("system dimensions must be positive".into());
            }
        }
        if let Some(d) = &self.disturbance {
            let gen = DisturbanceGen { kind: d.kind, w_max: d.w_max, e_max: d.e_max, switch_period: d.switch_period, seed: 0 };
            gen.validate().map_err(|e| Error::Config(format!("scenario {:?}: {e}", self.id)))?;
        }
        if let Some(l) = &self.loss {
            if !(l.q_y > 0.0) || !(l.r_u > 0.0) {
                return cfg("loss weights q_y and r_u must be positive".into());
            }
        }
        match self.kind {
            ExperimentKind::Sensitivity if p.eps.is_empty() || p.eps.iter().any(|e| !(*e > 0.0)) => {
                cfg("sensitivity needs a nonempty params.eps list of positive values".into())
            }
            ExperimentKind::Tradeoff if p.mu.is_empty() || p.mu.iter().any(|m| !(*m > 0.0)) => {
                cfg("tradeoff needs a nonempty params.mu list of positive values".into())
            }
            ExperimentKind::Tradeoff if p.lambda_grid == 0 || !(p.epoch_const > 0.0) => {
                cfg("tradeoff needs lambda_grid >= 1 and epoch_const > 0".into())
            }
            _ => Ok(()),
        }
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("matrix {name} must be a nonempty rectangular array")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl SystemSpec {
    pub fn build(&self, cell_seed: u64) -> Result<LinearSystem> {
        match self.generator {
            SystemGenerator::Random => {
                let mut rng = Rng::new(self.seed.unwrap_or(cell_seed));
                LinearSystem::random(&mut rng, self.dx, self.du, self.dy, self.open_loop_rho, self.target_rho)
            }
            SystemGenerator::Matrices => {
                let get = |m: &Option<Vec<Vec<f64>>>, n: &str| matrix_from_rows(m.as_deref().unwrap_or(&[]), n);
                LinearSystem::new(get(&self.a, "a")?, get(&self.b, "b")?, get(&self.c, "c")?, get(&self.k, "k")?)
            }
        }
    }
}

impl DisturbanceSpec {
    pub fn generator(&self, seed: u64) -> DisturbanceGen {
        DisturbanceGen { kind: self.kind, w_max: self.w_max, e_max: self.e_max, switch_period: self.switch_period, seed }
    }
}

impl LossSpec {
    pub fn build(&self, dy: usize, du: usize, seed: u64) -> Result<LossSchedule> {
        match self.kind {
            LossKind::Lqr => LossSchedule::lqr(dy, du, self.q_y, self.r_u),
            LossKind::Tracking => {
                let mut rng = Rng::with_stream(seed, LOSS_STREAM);
                LossSchedule::tracking(dy, du, self.q_y, self.r_u, self.target_radius, self.period, &mut rng)
            }
        }
    }
}

/// RNG stream for tracking targets.
pub const LOSS_STREAM: u64 = 0x1055;
