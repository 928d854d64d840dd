//! The DRC-ONS closed loop, with the nominal Markov operator known, supplied
//! as an estimate, or learned from an exploration phase.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::disturbance::Disturbances;
use super::drc::{drc_input, embed_inv, embed_y, recover_nat, stack};
use super::ldc::{control_regret, divergence_limit, drc_rollout};
use super::losses::LossSchedule;
use super::system::{simulate_step, LinearSystem};
use crate::error::{Error, Result};
use crate::estimation::{least_squares_markov, markov_error, LsDiagnostics, LsProblem, EXPLORATION_STREAM};
use crate::numcore::{Rng, Vector};
use crate::ocoam::{make_h, AffineContext, HindsightAccumulator, MarkovOperator, RegretLedger, RegretSummary, SemiOnsConfig, SemiOnsState};

/// Steps between checks of `Y_t z = Σ M^{[i]} ŷ_{t−i}`.
pub const IDENTITY_CHECK_EVERY: usize = 100;

/// RNG stream for the perturbation of `v̂_t` under [`Knowledge::Supplied`].
pub const OFFSET_NOISE_STREAM: u64 = 0x0ff5e7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrcOnsParams {
    /// DRC memory `m`.
    pub m: usize,
    /// Markov truncation `h`, used for recovery, the optimizer and the ledger.
    pub h: usize,
    /// Budget `R_M` on `Σ‖M^{[i]}‖_op`; the iterate lives in the ball of radius `√m·R_M`.
    pub r_m: f64,
    pub eta: Option<f64>,
    pub lambda: Option<f64>,
}

impl DrcOnsParams {
    pub fn new(m: usize, h: usize, r_m: f64) -> Self {
        DrcOnsParams { m, h, r_m, eta: None, lambda: None }
    }

    pub fn radius(&self) -> f64 {
        (self.m as f64).sqrt() * self.r_m
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.h == 0 {
            return Err(Error::InvalidInput(format!("DRC-ONS needs m, h >= 1, got m={} h={}", self.m, self.h)));
        }
        if !(self.r_m > 0.0) || !self.r_m.is_finite() {
            return Err(Error::InvalidInput(format!("R_M must be positive, got {}", self.r_m)));
        }
        Ok(())
    }
}

/// How the learner obtains the Markov operator it uses for recovery and updates.
#[derive(Debug, Clone, PartialEq)]
pub enum Knowledge {
    /// `G_K` truncated at `h`; exact-mode defaults.
    Known,
    /// A fixed estimate with error level `eps_g`; approximate-mode defaults.
    /// The learner's offset `v̂_t` additionally gets a random perturbation of
    /// norm at most `v_noise`, drawn from `seed`. With `exact_recovery` the
    /// nominal sequence is recovered with `G_K`, so only the optimizer's kernel
    /// and offset are perturbed; otherwise `ĝ` drives recovery as well.
    Supplied { g_hat: MarkovOperator, eps_g: f64, v_noise: f64, seed: u64, exact_recovery: bool },
    /// `n` exploration steps, least squares, `2h − 1` zero-input steps, then
    /// approximate-mode learning.
    Explore { n: usize, seed: u64 },
}

/// Per-step record of the realized loop; index `t − 1` holds step `t`.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub y: Vec<Vector>,
    pub u: Vec<Vector>,
    pub u_ex: Vec<Vector>,
    pub loss: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub horizon: usize,
    pub params: DrcOnsParams,
    pub config: SemiOnsConfig,
    pub alpha: f64,
    pub r_nat: f64,
    pub r_y: f64,
    pub r_g: f64,
    /// First step at which the learner plays.
    pub start: usize,
    pub n_explore: usize,
    pub ls: Option<LsDiagnostics>,
    /// `ε_G` used for tuning (supplied or estimated).
    pub eps_g: Option<f64>,
    /// `‖Ĝ − G_K‖_{ℓ1,op}` over blocks `0..=h`.
    pub markov_err: f64,
    pub alg_cost: f64,
    /// `J(K)`, the cost of pure feedback.
    pub static_cost: f64,
    /// True closed-loop cost of the best fixed DRC policy in hindsight.
    pub drc_best_cost: f64,
    /// Learner-side regret decomposition over steps `start..=T`.
    pub summary: RegretSummary,
    /// Largest residual of the `Y_t` spot checks.
    pub identity_residual: f64,
    pub z_final: Vector,
    pub trajectory: Trajectory,
}

impl RunReport {
    /// `J(alg) − min{J(K), J(best DRC), extra…}`.
    pub fn control_regret(&self, extra: &[f64]) -> Result<f64> {
        let mut costs = vec![self.static_cost, self.drc_best_cost];
        costs.extend_from_slice(extra);
        control_regret(self.alg_cost, &costs)
    }
}

/// DRC-ONS with the nominal Markov operator known.
pub fn drc_ons_run(sys: &LinearSystem, losses: &LossSchedule, dist: &Disturbances, horizon: usize, params: DrcOnsParams) -> Result<RunReport> {
    run_loop(sys, losses, dist, horizon, params, Knowledge::Known)
}

/// DRC-ONS on an unknown system: explore for `n` steps, then learn.
pub fn drc_ons_unknown_run(
    sys: &LinearSystem,
    losses: &LossSchedule,
    dist: &Disturbances,
    horizon: usize,
    params: DrcOnsParams,
    n: usize,
    seed: u64,
) -> Result<RunReport> {
    run_loop(sys, losses, dist, horizon, params, Knowledge::Explore { n, seed })
}

/// Shared loop for every [`Knowledge`] mode.
pub fn run_loop(
    sys: &LinearSystem,
    losses: &LossSchedule,
    dist: &Disturbances,
    horizon: usize,
    params: DrcOnsParams,
    knowledge: Knowledge,
) -> Result<RunReport> {
    params.validate()?;
    let (dy, du) = (sys.dy(), sys.du());
    let (m, h) = (params.m, params.h);
    let d = m * du * dy;
    if losses.dim() != dy + du {
        return Err(Error::dim("loss dimension", dy + du, losses.dim()));
    }
    if dist.len() < horizon {
        return Err(Error::InvalidInput(format!("disturbance realization has {} steps, need {horizon}", dist.len())));
    }
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    let (n_explore, start) = match &knowledge {
        Knowledge::Explore { n, .. } => (*n, n + 2 * h),
        _ => (0, 1),
    };
    if start > horizon {
        return Err(Error::InvalidInput(format!("exploration and burn-in need {} steps, horizon is {horizon}", start - 1)));
    }

    let g_true = sys.nominal_markov(h)?;
    let w_max = dist.w[..horizon].iter().map(|w| w.norm()).fold(0.0, f64::max);
    let e_max = dist.e[..horizon].iter().map(|e| e.norm()).fold(0.0, f64::max);
    let r_nat = sys.nat_radius(w_max, e_max)?;
    // A noiseless run has R_nat = 0; tune as if for unit noise so λ stays positive.
    let r_y = (m as f64).sqrt() * if r_nat > 0.0 { r_nat } else { 1.0 };
    let alpha = losses.alpha();
    let radius = params.radius();
    let limit = divergence_limit(sys, dist)?;

    let mut explore_rng = match &knowledge {
        Knowledge::Explore { seed, .. } => Some(Rng::with_stream(*seed, EXPLORATION_STREAM)),
        _ => None,
    };
    let mut offset_noise = match &knowledge {
        Knowledge::Supplied { v_noise, seed, .. } if *v_noise > 0.0 => Some((*v_noise, Rng::with_stream(*seed, OFFSET_NOISE_STREAM))),
        _ => None,
    };
    // (Ĝ, tuned config, ε_G) once known.
    let mut learner: Option<(MarkovOperator, SemiOnsConfig, Option<f64>)> = None;
    let mut ls_diag = None;
    let recovery_override = match &knowledge {
        Knowledge::Supplied { exact_recovery: true, .. } => Some(g_true.clone()),
        _ => None,
    };
    let mut r_g = 1.0_f64;
    let tune = |g: &MarkovOperator, eps: Option<f64>| -> Result<(SemiOnsConfig, f64)> {
        let r_g = g.l1_op_norm().max(1.0);
        let mut cfg = match eps {
            None => SemiOnsConfig::exact_defaults(alpha, h, r_y, r_g, radius),
            Some(eps) => SemiOnsConfig::approximate_defaults(alpha, h, horizon, eps, r_g, radius),
        };
        if let Some(eta) = params.eta {
            cfg.eta = eta;
        }
        if let Some(lambda) = params.lambda {
            cfg.lambda = lambda;
        }
        Ok((cfg, r_g))
    };
    match &knowledge {
        Knowledge::Known => {
            let (cfg, rg) = tune(&g_true, None)?;
            r_g = rg;
            learner = Some((g_true.clone(), cfg, None));
        }
        Knowledge::Supplied { g_hat, eps_g, v_noise, .. } => {
            if !(*v_noise >= 0.0) || !v_noise.is_finite() || !(*eps_g >= 0.0) {
                return Err(Error::InvalidInput(format!("eps_g and v_noise must be nonnegative, got {eps_g} and {v_noise}")));
            }
            if g_hat.out_dim() != dy + du || g_hat.in_dim() != du {
                return Err(Error::dim("supplied Markov estimate", format!("{}x{}", dy + du, du), format!("{}x{}", g_hat.out_dim(), g_hat.in_dim())));
            }
            let g_hat = g_hat.truncated(h);
            let (cfg, rg) = tune(&g_hat, Some(*eps_g))?;
            r_g = rg;
            learner = Some((g_hat, cfg, Some(*eps_g)));
        }
        Knowledge::Explore { .. } => {}
    }
    let mut ons = match &learner {
        Some((_, cfg, _)) => Some(SemiOnsState::new(d, *cfg)?),
        None => None,
    };

    let mut ledger = RegretLedger::new(g_true.clone(), d);
    let mut bih = HindsightAccumulator::new(d);
    let mut traj = Trajectory::default();
    let mut x = Vector::zeros(sys.dx());
    let mut x_nom = Vector::zeros(sys.dx());
    // Newest first.
    let mut y_hat_hist: VecDeque<Vector> = VecDeque::new();
    let mut y_nom_hist: VecDeque<Vector> = VecDeque::new();
    let mut y_star_hist: VecDeque<crate::numcore::Matrix> = VecDeque::new();
    let mut u_ex_hist: VecDeque<Vector> = VecDeque::new();
    let mut v_explore = Vec::with_capacity(n_explore);
    let (mut alg_cost, mut static_cost) = (0.0, 0.0);
    let mut identity_residual = 0.0_f64;

    for t in 1..=horizon {
        let (w, e) = (&dist.w[t - 1], &dist.e[t - 1]);

        if t == n_explore + 1 && learner.is_none() {
            let prob = LsProblem::new(h, dy, du, v_explore.clone(), traj.u_ex.clone())?;
            let (g_hat, diag) = least_squares_markov(&prob)?;
            let (cfg, rg) = tune(&g_hat, Some(diag.eps_hat))?;
            r_g = rg;
            ons = Some(SemiOnsState::new(d, cfg)?);
            // Recover ŷ for the exploration steps the DRC window can reach.
            let first = n_explore.saturating_sub(m) + 1;
            for s in first..=n_explore {
                let past = (1..s).rev().take(h).map(|j| &traj.u_ex[j - 1]);
                let (yh, _) = recover_nat(&g_hat, sys.k(), &traj.y[s - 1], past)?;
                y_hat_hist.push_front(yh);
            }
            y_hat_hist.truncate(m);
            learner = Some((g_hat, cfg, Some(diag.eps_hat)));
            ls_diag = Some(diag);
        }

        let y = sys.c() * &x + e;
        let y_nom = sys.c() * &x_nom + e;
        let v_nom = stack(&y_nom, &(sys.k() * &y_nom));

        let mut v_hat = None;
        if let Some((g_hat, _, _)) = &learner {
            let g_rec = recovery_override.as_ref().unwrap_or(g_hat);
            let (yh, uh) = recover_nat(g_rec, sys.k(), &y, u_ex_hist.iter())?;
            let mut vh = stack(&yh, &uh);
            if let Some((level, rng)) = offset_noise.as_mut() {
                let dir = rng.sphere_vector(dy + du, 1.0);
                vh += dir * (*level * rng.uniform());
            }
            v_hat = Some(vh);
            y_hat_hist.push_front(yh);
            y_hat_hist.truncate(m);
        }

        let mut played = None;
        let u_ex = if t <= n_explore {
            explore_rng.as_mut().map(|r| r.gaussian_vector(du)).unwrap_or_else(|| Vector::zeros(du))
        } else if t < start {
            if t + h >= start {
                let y_t = embed_y(&y_hat_hist, m, du, dy);
                ledger.push_context(&y_t)?;
                ons.as_mut().expect("learner initialized").push_context(y_t, h)?;
            }
            Vector::zeros(du)
        } else {
            let y_t = embed_y(&y_hat_hist, m, du, dy);
            let z = ons.as_ref().expect("learner initialized").z().clone();
            let u_ex = &y_t * &z;
            if t % IDENTITY_CHECK_EVERY == 0 {
                let direct = drc_input(&embed_inv(&z, m, du, dy)?, &y_hat_hist);
                let r = (&direct - &u_ex).norm() / (1.0 + u_ex.norm());
                identity_residual = identity_residual.max(r);
                if r > 1e-8 {
                    return Err(Error::Numeric(format!("embedding identity off by {r:.3e} at step {t}")));
                }
            }
            played = Some((y_t, z));
            u_ex
        };

        let u = sys.k() * &y + &u_ex;
        let loss = losses.at(t);
        let v = stack(&y, &u);
        let cost = loss.eval(&v);
        alg_cost += cost;
        static_cost += loss.eval(&v_nom);

        y_nom_hist.push_front(y_nom.clone());
        y_nom_hist.truncate(m);
        y_star_hist.push_front(embed_y(&y_nom_hist, m, du, dy));
        y_star_hist.truncate(h + 1);
        bih.add(loss, &v_nom, &make_h(&g_true, y_star_hist.iter(), d)?)?;

        if let Some((y_t, z)) = played {
            let (g_used, _, _) = learner.as_ref().expect("learner initialized");
            ledger.record(loss, &y_t, &v_nom, &z)?;
            let ctx = AffineContext::approximate(y_t, v_nom.clone(), v_hat.expect("recovery ran"));
            ons.as_mut().expect("learner initialized").step(loss, &ctx, g_used)?;
        }

        if t <= n_explore {
            v_explore.push(v.clone());
        }
        x = simulate_step(sys, &x, &u, w, e).0;
        x_nom = simulate_step(sys, &x_nom, &(sys.k() * &y_nom), w, e).0;
        let norm = x.norm();
        if !(norm <= limit) {
            return Err(Error::Diverged { step: t, norm, limit });
        }
        if v_nom.norm() > r_nat * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::Numeric(format!("nominal signal {} exceeds R_nat {r_nat} at step {t}", v_nom.norm())));
        }
        u_ex_hist.push_front(u_ex.clone());
        u_ex_hist.truncate(h);
        traj.y.push(y);
        traj.u.push(u);
        traj.u_ex.push(u_ex);
        traj.loss.push(cost);
    }

    let (g_used, config, eps_g) = learner.ok_or_else(|| Error::InvalidInput("learner never started".into()))?;
    let (_, ledger_value) = ledger.comparator(radius)?;
    let summary = ledger.finalize(ledger_value);
    let (z_star, _) = bih.solve(radius)?;
    let drc_best_cost = drc_rollout(sys, &embed_inv(&z_star, m, du, dy)?, dist, losses, horizon)?;
    Ok(RunReport {
        horizon,
        params,
        config,
        alpha,
        r_nat,
        r_y,
        r_g,
        start,
        n_explore,
        ls: ls_diag,
        eps_g,
        markov_err: markov_error(&g_used, &g_true)?,
        alg_cost,
        static_cost,
        drc_best_cost,
        summary,
        identity_residual,
        z_final: ons.map(|o| o.z().clone()).unwrap_or_else(|| Vector::zeros(d)),
        trajectory: traj,
    })
}
