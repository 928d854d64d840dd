//! Bounded oblivious disturbance sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Rng, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    /// Per-coordinate sinusoids with random frequency and phase.
    Sinusoid,
    /// A fixed direction whose sign flips at random times.
    SignSwitch,
    /// Independent ±1 coordinates.
    Rademacher,
    /// A fixed random direction.
    Constant,
    /// Half sinusoid, half sign switch.
    Mixed,
}

impl std::str::FromStr for DisturbanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinusoid" => Ok(Self::Sinusoid),
            "sign-switch" => Ok(Self::SignSwitch),
            "rademacher" => Ok(Self::Rademacher),
            "constant" => Ok(Self::Constant),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::Config(format!("unknown disturbance kind {other:?}"))),
        }
    }
}

/// Disturbance description. Every realized `w_t` and `e_t` satisfies
/// `‖w_t‖ ≤ w_max`, `‖e_t‖ ≤ e_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceGen {
    pub kind: DisturbanceKind,
    pub w_max: f64,
    pub e_max: f64,
    /// Mean number of steps between sign flips for the switching kinds.
    pub switch_period: f64,
    pub seed: u64,
}

/// A realized sequence; index `t − 1` holds `(w_t, e_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Disturbances {
    pub w: Vec<Vector>,
    pub e: Vec<Vector>,
}

impl Disturbances {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// All-zero sequence.
    pub fn zeros(dx: usize, dy: usize, horizon: usize) -> Self {
        Disturbances { w: vec![Vector::zeros(dx); horizon], e: vec![Vector::zeros(dy); horizon] }
    }
}

impl DisturbanceGen {
    pub fn new(kind: DisturbanceKind, w_max: f64, e_max: f64, seed: u64) -> Self {
        DisturbanceGen { kind, w_max, e_max, switch_period: 64.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_max >= 0.0) || !(self.e_max >= 0.0) || !self.w_max.is_finite() || !self.e_max.is_finite() {
            return Err(Error::Config(format!("disturbance bounds must be finite and nonnegative: {} {}", self.w_max, self.e_max)));
        }
        if !(self.switch_period >= 1.0) {
            return Err(Error::Config(format!("switch_period must be at least 1, got {}", self.switch_period)));
        }
        Ok(())
    }

    pub fn realize(&self, dx: usize, dy: usize, horizon: usize) -> Result<Disturbances> {
        self.validate()?;
        let rng = Rng::new(self.seed);
        let w = channel(self, &mut rng.derive(1), dx, self.w_max, horizon);
        let e = channel(self, &mut rng.derive(2), dy, self.e_max, horizon);
        Ok(Disturbances { w, e })
    }
}

fn channel(gen: &DisturbanceGen, rng: &mut Rng, dim: usize, bound: f64, horizon: usize) -> Vec<Vector> {
    if dim == 0 {
        return vec![Vector::zeros(0); horizon];
    }
    let coord = bound / (dim as f64).sqrt();
    let freqs: Vec<f64> = (0..dim).map(|_| rng.uniform_range(0.01, 0.5)).collect();
    let phases: Vec<f64> = (0..dim).map(|_| rng.uniform_range(0.0, std::f64::consts::TAU)).collect();
    let direction = rng.sphere_vector(dim, bound);
    let flip = 1.0 / gen.switch_period;
    let mut sign = 1.0;
    let mut out = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let sinusoid = || Vector::from_fn(dim, |i, _| coord * (freqs[i] * t as f64 + phases[i]).sin());
        let v = match gen.kind {
            DisturbanceKind::Sinusoid => sinusoid(),
            DisturbanceKind::SignSwitch | DisturbanceKind::Mixed => {
                if rng.uniform() < flip {
                    sign = -sign;
                }
                if gen.kind == DisturbanceKind::Mixed {
                    (sinusoid() + &direction * sign) * 0.5
                } else {
                    &direction * sign
                }
            }
            DisturbanceKind::Rademacher => Vector::from_fn(dim, |_, _| coord * rng.rademacher()),
            DisturbanceKind::Constant => direction.clone(),
        };
        out.push(v);
    }
    out
}
