//! Benchmark linear dynamic controllers, static conversions and control regret.

use super::disturbance::Disturbances;
use super::drc::{drc_input, stack, DrcPolicy};
use super::losses::LossSchedule;
use super::system::{simulate_step, spectral_radius, LinearSystem};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Vector};
use crate::ocoam::MarkovOperator;

/// Divergence guard: `1e6·max{1, R_nat}` for the realized disturbance bounds.
pub fn divergence_limit(sys: &LinearSystem, dist: &Disturbances) -> Result<f64> {
    let w_max = dist.w.iter().map(|w| w.norm()).fold(0.0, f64::max);
    let e_max = dist.e.iter().map(|e| e.norm()).fold(0.0, f64::max);
    Ok(1e6 * sys.nat_radius(w_max, e_max)?.max(1.0))
}

/// `s_{t+1} = A_π s_t + B_π y_t`, `u_t = C_π s_t + D_π y_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdcPolicy {
    pub a_pi: Matrix,
    pub b_pi: Matrix,
    pub c_pi: Matrix,
    pub d_pi: Matrix,
}

impl LdcPolicy {
    pub fn new(a_pi: Matrix, b_pi: Matrix, c_pi: Matrix, d_pi: Matrix) -> Result<Self> {
        let ds = a_pi.nrows();
        if !a_pi.is_square() || b_pi.nrows() != ds || c_pi.ncols() != ds || c_pi.nrows() != d_pi.nrows() || b_pi.ncols() != d_pi.ncols() {
            return Err(Error::dim(
                "LdcPolicy::new",
                "A_π ds×ds, B_π ds×dy, C_π du×ds, D_π du×dy",
                format!(
                    "{}x{}, {}x{}, {}x{}, {}x{}",
                    a_pi.nrows(),
                    a_pi.ncols(),
                    b_pi.nrows(),
                    b_pi.ncols(),
                    c_pi.nrows(),
                    c_pi.ncols(),
                    d_pi.nrows(),
                    d_pi.ncols()
                ),
            ));
        }
        Ok(LdcPolicy { a_pi, b_pi, c_pi, d_pi })
    }

    /// Memoryless `u = K y`.
    pub fn static_gain(k: Matrix) -> Self {
        let (du, dy) = k.shape();
        LdcPolicy { a_pi: Matrix::zeros(0, 0), b_pi: Matrix::zeros(0, dy), c_pi: Matrix::zeros(du, 0), d_pi: k }
    }

    pub fn state_dim(&self) -> usize {
        self.a_pi.nrows()
    }

    /// Joint plant–controller state matrix
    /// `[[A + B D_π C, B C_π], [B_π C, A_π]]`.
    pub fn closed_loop_matrix(&self, sys: &LinearSystem) -> Matrix {
        let (dx, ds) = (sys.dx(), self.state_dim());
        let mut m = Matrix::zeros(dx + ds, dx + ds);
        m.view_mut((0, 0), (dx, dx)).copy_from(&(sys.a() + sys.b() * &self.d_pi * sys.c()));
        m.view_mut((0, dx), (dx, ds)).copy_from(&(sys.b() * &self.c_pi));
        m.view_mut((dx, 0), (ds, dx)).copy_from(&(&self.b_pi * sys.c()));
        m.view_mut((dx, dx), (ds, ds)).copy_from(&self.a_pi);
        m
    }

    /// Fits `‖A_cl^n‖ ≤ c·ρⁿ` for `n ≤ h`, returning `(c, ρ)` with `ρ` the
    /// closed-loop spectral radius padded by `1e-3`.
    pub fn decay_fit(&self, sys: &LinearSystem, h: usize) -> Result<(f64, f64)> {
        let acl = self.closed_loop_matrix(sys);
        let rho = spectral_radius(&acl);
        if rho >= 1.0 {
            return Err(Error::Unstable { rho });
        }
        let rho = (rho + 1e-3).min(0.999_999);
        let mut power = Matrix::identity(acl.nrows(), acl.nrows());
        let mut c = 0.0_f64;
        for n in 0..=h {
            c = c.max(crate::numcore::op_norm(&power)? / rho.powi(n as i32));
            power = &power * &acl;
        }
        Ok((c, rho))
    }
}

/// Closed-loop cost of `pi` on a fixed disturbance realization, `x₁ = s₁ = 0`.
pub fn ldc_rollout(sys: &LinearSystem, pi: &LdcPolicy, dist: &Disturbances, losses: &LossSchedule, horizon: usize) -> Result<f64> {
    Ok(ldc_trace(sys, pi, dist, losses, horizon)?.0)
}

/// As [`ldc_rollout`], also returning the `(y_t, u_t)` sequence.
pub fn ldc_trace(
    sys: &LinearSystem,
    pi: &LdcPolicy,
    dist: &Disturbances,
    losses: &LossSchedule,
    horizon: usize,
) -> Result<(f64, Vec<(Vector, Vector)>)> {
    if dist.len() < horizon {
        return Err(Error::InvalidInput(format!("disturbance realization has {} steps, need {horizon}", dist.len())));
    }
    if pi.d_pi.shape() != (sys.du(), sys.dy()) {
        return Err(Error::dim("ldc_rollout D_π", format!("{}x{}", sys.du(), sys.dy()), format!("{}x{}", pi.d_pi.nrows(), pi.d_pi.ncols())));
    }
    let limit = divergence_limit(sys, dist)?;
    let mut x = Vector::zeros(sys.dx());
    let mut s = Vector::zeros(pi.state_dim());
    let mut cost = 0.0;
    let mut trace = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let (w, e) = (&dist.w[t - 1], &dist.e[t - 1]);
        let y = sys.c() * &x + e;
        let u = &pi.c_pi * &s + &pi.d_pi * &y;
        cost += losses.at(t).eval(&stack(&y, &u));
        s = &pi.a_pi * &s + &pi.b_pi * &y;
        x = simulate_step(sys, &x, &u, w, e).0;
        let n = x.norm();
        if !(n <= limit) {
            return Err(Error::Diverged { step: t, norm: n, limit });
        }
        trace.push((y, u));
    }
    Ok((cost, trace))
}

/// Cost of a fixed DRC policy fed the exact nominal outputs (from a parallel
/// pure-feedback simulation), `u_t = K y_t + Σ M^{[i]} y^K_{t−i}`.
pub fn drc_rollout(sys: &LinearSystem, policy: &DrcPolicy, dist: &Disturbances, losses: &LossSchedule, horizon: usize) -> Result<f64> {
    if dist.len() < horizon {
        return Err(Error::InvalidInput(format!("disturbance realization has {} steps, need {horizon}", dist.len())));
    }
    let limit = divergence_limit(sys, dist)?;
    let mut x = Vector::zeros(sys.dx());
    let mut x_nom = Vector::zeros(sys.dx());
    let mut hist: std::collections::VecDeque<Vector> = std::collections::VecDeque::new();
    let mut cost = 0.0;
    for t in 1..=horizon {
        let (w, e) = (&dist.w[t - 1], &dist.e[t - 1]);
        let y_nom = sys.c() * &x_nom + e;
        hist.push_front(y_nom.clone());
        hist.truncate(policy.m());
        let y = sys.c() * &x + e;
        let u = sys.k() * &y + drc_input(policy, &hist);
        cost += losses.at(t).eval(&stack(&y, &u));
        x = simulate_step(sys, &x, &u, w, e).0;
        x_nom = simulate_step(sys, &x_nom, &(sys.k() * &y_nom), w, e).0;
        let n = x.norm();
        if !(n <= limit) {
            return Err(Error::Diverged { step: t, norm: n, limit });
        }
    }
    Ok(cost)
}

/// `G_{K→π}^{[i]} = 1{i=0} K_π + (K_π − K) C (A + BKC)^{i−1} B (K_π − K)`, blocks `0..=h`.
///
/// The `i ≥ 1` term reproduces the conversion formula exactly as stated,
/// including the trailing `(K_π − K)` factor. See
/// [`drc_comparator_for_static`] for the operator that reproduces the `K_π`
/// closed loop.
pub fn static_conversion(sys: &LinearSystem, k_pi: &Matrix, h: usize) -> Result<MarkovOperator> {
    sys.with_gain(k_pi.clone())?;
    let delta = k_pi - sys.k();
    let acl = sys.closed_loop();
    let mut blocks = Vec::with_capacity(h + 1);
    blocks.push(k_pi.clone());
    let mut power_b = sys.b().clone();
    for _ in 1..=h {
        blocks.push(&delta * sys.c() * &power_b * &delta);
        power_b = &acl * power_b;
    }
    MarkovOperator::new(blocks)
}

/// DRC parameters that reproduce the static policy `u = K_π y` when applied to
/// the nominal outputs: with `Δ = K_π − K`,
/// `M^{[0]} = Δ` and `M^{[i]} = Δ C (A + B K_π C)^{i−1} B Δ`, truncated to `m` blocks.
///
/// Follows from `u^ex = Δ y` and `y = y^K + Σ_{i≥1} C (A+BKC)^{i−1} B u^ex_{t−i}`,
/// solved for `u^ex` in terms of `y^K`.
pub fn drc_comparator_for_static(sys: &LinearSystem, k_pi: &Matrix, m: usize) -> Result<DrcPolicy> {
    let target = sys.with_gain(k_pi.clone())?;
    let delta = k_pi - sys.k();
    let a_pi = target.closed_loop();
    let mut blocks = Vec::with_capacity(m.max(1));
    blocks.push(delta.clone());
    let mut power_b = sys.b().clone();
    for _ in 1..m.max(1) {
        blocks.push(&delta * sys.c() * &power_b * &delta);
        power_b = &a_pi * power_b;
    }
    DrcPolicy::new(blocks)
}

/// DRC parameters read off the stated conversion: `M^{[0]} = K_π − K` and
/// `M^{[i]} = G_{K→π}^{[i]}` for `1 ≤ i < m`.
pub fn drc_from_conversion(sys: &LinearSystem, conversion: &MarkovOperator, m: usize) -> Result<DrcPolicy> {
    let head = conversion.truncated(m.max(1) - 1);
    let mut blocks = head.blocks().to_vec();
    blocks[0] = &blocks[0] - sys.k();
    DrcPolicy::new(blocks)
}

/// `J(alg) − min_π J(π)` over the supplied comparator costs.
pub fn control_regret(alg_cost: f64, comparator_costs: &[f64]) -> Result<f64> {
    let best = comparator_costs.iter().cloned().fold(f64::INFINITY, f64::min);
    if comparator_costs.is_empty() || !best.is_finite() {
        return Err(Error::InvalidInput("control regret needs at least one finite comparator cost".into()));
    }
    Ok(alg_cost - best)
}
