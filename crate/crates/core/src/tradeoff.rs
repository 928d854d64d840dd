//! Regret/movement tradeoff on the scalar epoch adversary: standard ONS and
//! OGD baselines, and Semi-ONS on the same losses written in affine-memory form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{proj_weighted_ball, spd_solve, Matrix, Rng, SpdMatrix, Vector};
use crate::ocoam::{AffineContext, MarkovOperator, QuadLoss, RegretLedger, RegretSummary, SemiOnsConfig, SemiOnsState};

/// Default constant `c` in the epoch count `k = ⌊(8Tc/µ)^{2/3}⌋`.
pub const DEFAULT_EPOCH_CONST: f64 = 0.5;

/// Offsets `v_t ∈ {−1, 1}` constant over epochs of length `E`, a fresh
/// Rademacher sign per epoch, and losses `f_t(z) = (v_t − εz)²` on `[−1, 1]`.
///
/// When `E` does not divide `T` the last epoch is shorter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochAdversary {
    pub horizon: usize,
    pub epoch_len: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub v: Vec<f64>,
}

impl EpochAdversary {
    pub fn new(horizon: usize, epoch_len: usize, epsilon: f64, seed: u64) -> Result<Self> {
        if horizon == 0 || epoch_len == 0 {
            return Err(Error::InvalidInput("epoch adversary needs T, E >= 1".into()));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidInput(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        let mut rng = Rng::new(seed);
        let mut v = Vec::with_capacity(horizon);
        let mut sign = 1.0;
        for t in 0..horizon {
            if t % epoch_len == 0 {
                sign = rng.rademacher();
            }
            v.push(sign);
        }
        Ok(EpochAdversary { horizon, epoch_len, epsilon, seed, v })
    }

    /// Parameters tuned to movement weight `µ`: `k = ⌊(8Tc/µ)^{2/3}⌋` epochs,
    /// `E = ⌊T/k⌋` and `ε = µ/(4E)`, with `k` clamped to `[1, T]` and `ε` to 1.
    pub fn for_mu(horizon: usize, mu: f64, c: f64, seed: u64) -> Result<Self> {
        if !(mu > 0.0) || !(c > 0.0) {
            return Err(Error::InvalidInput(format!("mu and c must be positive, got {mu} and {c}")));
        }
        let k = ((8.0 * horizon as f64 * c / mu).powf(2.0 / 3.0).floor() as usize).clamp(1, horizon.max(1));
        let epoch_len = (horizon / k).max(1);
        let epsilon = (mu / (4.0 * epoch_len as f64)).min(1.0);
        Self::new(horizon, epoch_len, epsilon, seed)
    }

    pub fn epochs(&self) -> usize {
        self.horizon.div_ceil(self.epoch_len)
    }

    /// Largest `|f_t'|` on `[−1, 1]`.
    pub fn lipschitz(&self) -> f64 {
        2.0 * self.epsilon * (1.0 + self.epsilon)
    }
}

/// `f_t(z) = (v_t − εz)² = ε²(z − v_t/ε)²`.
pub fn adversary_losses(adv: &EpochAdversary) -> Result<Vec<QuadLoss>> {
    let q = Matrix::from_element(1, 1, adv.epsilon * adv.epsilon);
    adv.v
        .iter()
        .map(|&v| QuadLoss::new(q.clone(), Vector::from_element(1, v / adv.epsilon)))
        .collect()
}

/// Standard ONS: `Λ = λI + Σ ∇_s∇_sᵀ`, including the current gradient.
#[derive(Debug, Clone)]
pub struct OnsState {
    pub z: Vector,
    lambda_mat: SpdMatrix,
    pub eta: f64,
    pub lambda: f64,
    pub radius: f64,
}

impl OnsState {
    pub fn new(dim: usize, eta: f64, lambda: f64, radius: f64) -> Result<Self> {
        for (name, v) in [("eta", eta), ("lambda", lambda), ("radius", radius)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("ONS {name} must be positive and finite, got {v}")));
            }
        }
        Ok(OnsState { z: Vector::zeros(dim), lambda_mat: SpdMatrix::scaled_identity(dim, lambda)?, eta, lambda, radius })
    }

    pub fn preconditioner(&self) -> &SpdMatrix {
        &self.lambda_mat
    }
}

/// One ONS update at the current iterate; returns the played point.
pub fn ons_step(state: &mut OnsState, loss: &QuadLoss) -> Result<Vector> {
    let grad = loss.grad(&state.z);
    state.lambda_mat.add_outer(&grad)?;
    let z_tilde = &state.z - spd_solve(&state.lambda_mat, &grad)? * state.eta;
    let next = proj_weighted_ball(&state.lambda_mat, &z_tilde, state.radius)?;
    Ok(std::mem::replace(&mut state.z, next))
}

/// `η = 2·max{4GD, 1/τ}` with `τ = α/G²` the exp-concavity of an
/// `α`-strongly convex, `G`-Lipschitz loss on a set of diameter `D`.
pub fn ons_eta(g_lip: f64, diameter: f64, alpha: f64) -> f64 {
    2.0 * (4.0 * g_lip * diameter).max(g_lip * g_lip / alpha)
}

/// `z − ∇/(αt)`, clipped to the ball of radius `radius`.
pub fn ogd_step(z: &Vector, loss: &QuadLoss, t: usize, alpha: f64, radius: f64) -> Result<Vector> {
    if !(alpha > 0.0) || t == 0 {
        return Err(Error::InvalidInput(format!("OGD needs alpha > 0 and t >= 1, got {alpha} and {t}")));
    }
    let next = z - loss.grad(z) / (alpha * t as f64);
    let n = next.norm();
    Ok(if n > radius { next * (radius / n) } else { next })
}

/// `OcoReg + µ·EucCost` of a finalized ledger.
pub fn regmu(summary: &RegretSummary, mu: f64) -> f64 {
    summary.regmu(mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Learner {
    Ons,
    Ogd,
    SemiOns,
}

fn scalar_ledger() -> RegretLedger {
    RegretLedger::new(MarkovOperator::identity(1), 1)
}

/// Runs a learner on the adversary and returns the ledger summary against the
/// exact comparator on `[−1, 1]`. `lambda` is the ONS regularizer; Semi-ONS
/// uses its exact-mode defaults.
pub fn run_learner(adv: &EpochAdversary, learner: Learner, lambda: f64) -> Result<RegretSummary> {
    let losses = adversary_losses(adv)?;
    let one = Matrix::from_element(1, 1, 1.0);
    let zero = Vector::zeros(1);
    let alpha = 2.0 * adv.epsilon * adv.epsilon;
    let mut ledger = scalar_ledger();
    match learner {
        Learner::Ons => {
            let eta = ons_eta(adv.lipschitz(), 2.0, alpha);
            let mut st = OnsState::new(1, eta, lambda, 1.0)?;
            for loss in &losses {
                let z = ons_step(&mut st, loss)?;
                ledger.record(loss, &one, &zero, &z)?;
            }
        }
        Learner::Ogd => {
            let mut z = Vector::zeros(1);
            for (t, loss) in losses.iter().enumerate() {
                ledger.record(loss, &one, &zero, &z)?;
                z = ogd_step(&z, loss, t + 1, alpha, 1.0)?;
            }
        }
        Learner::SemiOns => {
            // ℓ(u) = u², G = {−ε}, Y_t = 1, v_t the adversary offset.
            let g = MarkovOperator::scalar(&[-adv.epsilon])?;
            let sq = QuadLoss::squared_norm(1);
            let mut lifted = RegretLedger::new(g.clone(), 1);
            // α = 2 for ℓ(u) = u², h = 0, R_Y = 1, R_G = max{1, ε} = 1.
            let cfg = SemiOnsConfig::exact_defaults(2.0, 0, 1.0, 1.0, 1.0);
            let mut st = SemiOnsState::new(1, cfg)?;
            for &v in &adv.v {
                let v = Vector::from_element(1, v);
                let z = st.z().clone();
                lifted.record(&sq, &one, &v, &z)?;
                st.step(&sq, &AffineContext::exact(one.clone(), v), &g)?;
            }
            let (_, value) = lifted.comparator(1.0)?;
            return Ok(lifted.finalize(value));
        }
    }
    let (_, value) = ledger.comparator(1.0)?;
    Ok(ledger.finalize(value))
}

/// `λ ∈ {G²·16^j : j = 0..len}`, starting at the smallest value allowed for ONS.
pub fn lambda_grid(g_lip: f64, len: usize) -> Vec<f64> {
    (0..len).map(|j| g_lip * g_lip * 16f64.powi(j as i32)).collect()
}

/// Seed-averaged `Regµ` of ONS for each `λ` on the grid, with adversaries
/// tuned to `µ`. Returns `(λ, mean Regµ)` pairs.
pub fn ons_grid_means(horizon: usize, mu: f64, c: f64, seeds: &[u64], grid_len: usize) -> Result<Vec<(f64, f64)>> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("need at least one seed".into()));
    }
    let advs: Vec<EpochAdversary> = seeds.iter().map(|&s| EpochAdversary::for_mu(horizon, mu, c, s)).collect::<Result<_>>()?;
    let grid = lambda_grid(advs[0].lipschitz(), grid_len);
    grid.par_iter()
        .map(|&lambda| {
            let total: Result<f64> = advs.iter().map(|a| Ok(run_learner(a, Learner::Ons, lambda)?.regmu(mu))).sum();
            Ok((lambda, total? / advs.len() as f64))
        })
        .collect()
}

/// Best seed-averaged ONS `Regµ` over the λ grid.
pub fn ons_tuned_regmu(horizon: usize, mu: f64, c: f64, seeds: &[u64], grid_len: usize) -> Result<(f64, f64)> {
    let means = ons_grid_means(horizon, mu, c, seeds, grid_len)?;
    Ok(means.into_iter().fold((f64::NAN, f64::INFINITY), |best, p| if p.1 < best.1 { p } else { best }))
}
