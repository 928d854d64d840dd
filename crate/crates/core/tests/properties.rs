//! Cross-module invariants checked on random instances.

use drcons::control::{drc_ons_run, simulate_step, stack, DisturbanceGen, DisturbanceKind, DrcOnsParams, LinearSystem, LossSchedule};
use drcons::numcore::{eig_min_sym, Matrix, Rng, Vector};
use drcons::ocoam::{AffineContext, MarkovOperator, QuadLoss, SemiOnsConfig, SemiOnsState};
use proptest::prelude::*;

/// Rolls the loop `u = Ky + u_ex` and returns stacked `(y, u)` per step.
fn rollout(sys: &LinearSystem, u_ex: &[Vector], w: &[Vector], e: &[Vector]) -> Vec<Vector> {
    let mut x = Vector::zeros(sys.dx());
    let mut out = Vec::with_capacity(u_ex.len());
    for t in 0..u_ex.len() {
        let y = sys.c() * &x + &e[t];
        let u = sys.k() * &y + &u_ex[t];
        out.push(stack(&y, &u));
        x = simulate_step(sys, &x, &u, &w[t], &e[t]).0;
    }
    out
}

/// `Σ_{i≤t} G^{[i]} u_ex_{t−i}` per step.
fn convolve(g: &MarkovOperator, u_ex: &[Vector]) -> Vec<Vector> {
    (0..u_ex.len())
        .map(|t| {
            let mut acc = Vector::zeros(g.out_dim());
            for (i, block) in g.blocks().iter().enumerate().take(t + 1) {
                acc.gemv(1.0, block, &u_ex[t - i], 1.0);
            }
            acc
        })
        .collect()
}

fn nilpotent_with_gain(rng: &mut Rng) -> LinearSystem {
    // Pick a strictly upper-triangular closed loop N and K ≠ 0, then set
    // A = N − BKC so that A + BKC = N.
    let dx = 4;
    let n = Matrix::from_fn(dx, dx, |i, j| if j > i { rng.gaussian() } else { 0.0 });
    let b = rng.gaussian_matrix(dx, 1);
    let c = rng.gaussian_matrix(1, dx);
    let k = Matrix::from_element(1, 1, rng.gaussian());
    let a = &n - &b * &k * &c;
    LinearSystem::new(a, b, c, k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn superposition_is_exact_for_nilpotent_plants(seed in 0u64..100_000) {
        let mut rng = Rng::new(seed);
        let sys = nilpotent_with_gain(&mut rng);
        let horizon = 40;
        let g = sys.nominal_markov(sys.dx()).unwrap();
        let u_ex: Vec<Vector> = (0..horizon).map(|_| rng.gaussian_vector(1)).collect();
        let w: Vec<Vector> = (0..horizon).map(|_| rng.gaussian_vector(sys.dx())).collect();
        let e: Vec<Vector> = (0..horizon).map(|_| rng.gaussian_vector(1) * 0.1).collect();
        let zeros = vec![Vector::zeros(1); horizon];
        let with = rollout(&sys, &u_ex, &w, &e);
        let nominal = rollout(&sys, &zeros, &w, &e);
        let conv = convolve(&g, &u_ex);
        for t in 0..horizon {
            let diff = &with[t] - &nominal[t];
            prop_assert!((&diff - &conv[t]).norm() <= 1e-8 * diff.norm().max(1.0));
        }
    }

    #[test]
    fn superposition_within_tail_bound(seed in 0u64..100_000, h in 2usize..12) {
        let mut rng = Rng::new(seed);
        let sys = LinearSystem::random(&mut rng, 3, 1, 2, 0.9, 0.6).unwrap();
        let horizon = 60;
        let g_long = sys.nominal_markov(horizon).unwrap();
        let g = g_long.truncated(h);
        let u_ex: Vec<Vector> = (0..horizon).map(|_| rng.gaussian_vector(1)).collect();
        let w: Vec<Vector> = (0..horizon).map(|_| rng.gaussian_vector(3)).collect();
        let e: Vec<Vector> = (0..horizon).map(|_| rng.gaussian_vector(2) * 0.1).collect();
        let with = rollout(&sys, &u_ex, &w, &e);
        let nominal = rollout(&sys, &vec![Vector::zeros(1); horizon], &w, &e);
        let conv = convolve(&g, &u_ex);
        let u_max = u_ex.iter().map(Vector::norm).fold(0.0, f64::max);
        let bound = g_long.decay_psi(h + 1) * u_max;
        for t in 0..horizon {
            let diff = &with[t] - &nominal[t];
            prop_assert!((&diff - &conv[t]).norm() <= bound + 1e-9 * diff.norm().max(1.0));
        }
    }

    #[test]
    fn semi_ons_iterates_feasible_and_preconditioner_monotone(seed in 0u64..100_000, steps in 5usize..40) {
        let mut rng = Rng::new(seed);
        let g = MarkovOperator::new((0..3).map(|_| rng.gaussian_matrix(2, 1)).collect()).unwrap();
        let d = 3;
        let radius = 0.5 + rng.uniform();
        let mut st = SemiOnsState::new(d, SemiOnsConfig { eta: 1.0, lambda: 0.5, radius }).unwrap();
        let loss = QuadLoss::squared_norm(2);
        let mut prev = st.preconditioner().as_matrix().clone();
        for _ in 0..steps {
            let y = rng.gaussian_matrix(1, d) * 3.0;
            let ctx = AffineContext::exact(y, rng.gaussian_vector(2) * 5.0);
            let step = st.step(&loss, &ctx, &g).unwrap();
            prop_assert!(st.z().norm() <= radius * (1.0 + 1e-9));
            let now = st.preconditioner().as_matrix().clone();
            let inc = &now - &prev;
            prop_assert!((&inc - step.h.transpose() * &step.h).amax() <= 1e-9 * now.amax());
            prop_assert!(eig_min_sym(&((&inc + inc.transpose()) * 0.5)).unwrap() >= -1e-10 * now.amax().max(1.0));
            prev = now;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Known dynamics, default `m` and `h`: ControlReg against the DRC
    /// comparator stays within `12·L·R_M²·R_G²·R_nat²` of MemoryReg.
    #[test]
    fn control_regret_tracks_memory_regret(seed in 0u64..10_000) {
        let horizon = 1500;
        let mut rng = Rng::new(seed);
        let sys = LinearSystem::random(&mut rng, 3, 1, 2, 0.9, 0.5).unwrap();
        let losses = LossSchedule::tracking(2, 1, 1.0, 0.5, 0.5, 8, &mut rng).unwrap();
        let dist = DisturbanceGen::new(DisturbanceKind::Mixed, 1.0, 0.1, seed).realize(3, 2, horizon).unwrap();
        let m = sys.default_memory(horizon);
        let params = DrcOnsParams::new(m, m, 2.0);
        let rep = drc_ons_run(&sys, &losses, &dist, horizon, params).unwrap();
        let control_reg = rep.alg_cost - rep.drc_best_cost;
        let budget = 12.0 * losses.smoothness() * params.r_m.powi(2) * rep.r_g.powi(2) * rep.r_nat.powi(2);
        prop_assert!(control_reg <= rep.summary.memory_reg + budget, "{} vs {} + {}", control_reg, rep.summary.memory_reg, budget);
        // The truncation gap itself is far smaller than the budget.
        prop_assert!((control_reg - rep.summary.memory_reg).abs() <= 1e-3 * budget);
    }
}
