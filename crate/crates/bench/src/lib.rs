//! Fixtures shared by the kernel benchmarks.

use drcons::control::{embed_y, LinearSystem};
use drcons::numcore::{Matrix, Rng, SpdMatrix, Vector};
use drcons::ocoam::{AffineContext, MarkovOperator, QuadLoss, SemiOnsConfig, SemiOnsState};

/// A random stabilized plant with `dx = 3`, `du = 1`, `dy = 2`.
pub fn plant(seed: u64) -> LinearSystem {
    LinearSystem::random(&mut Rng::new(seed), 3, 1, 2, 0.9, 0.5).expect("random plant")
}

/// Semi-ONS state with a warm history, plus the next loss, context and kernel.
pub fn semi_ons_fixture(m: usize, h: usize) -> (SemiOnsState, QuadLoss, AffineContext, MarkovOperator) {
    let sys = plant(1);
    let g = sys.nominal_markov(h).expect("markov");
    let d = m * sys.du() * sys.dy();
    let mut rng = Rng::new(2);
    let mut state = SemiOnsState::new(d, SemiOnsConfig::exact_defaults(2.0, h, 3.0, g.l1_op_norm(), 2.0)).expect("state");
    let ys: Vec<Vector> = (0..m).map(|_| rng.gaussian_vector(sys.dy())).collect();
    let y = embed_y(&ys, m, sys.du(), sys.dy());
    for _ in 0..=h {
        state.push_context(y.clone(), h).expect("context");
    }
    let loss = QuadLoss::squared_norm(sys.dy() + sys.du());
    let ctx = AffineContext::exact(y, rng.gaussian_vector(sys.dy() + sys.du()));
    (state, loss, ctx, g)
}

/// Random SPD weight and a target well outside the unit ball.
pub fn projection_fixture(d: usize) -> (SpdMatrix, Vector) {
    let mut rng = Rng::new(3);
    let b = rng.gaussian_matrix(d, d);
    let l = b.transpose() * &b + Matrix::identity(d, d);
    (SpdMatrix::new(l).expect("spd"), rng.gaussian_vector(d) * 10.0)
}
