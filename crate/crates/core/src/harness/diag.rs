//! Randomized numerical checks: invertibility bound, covariance domination,
//! gradients and the weighted projection.

use serde::{Deserialize, Serialize};

use crate::control::LinearSystem;
use crate::error::{Error, Result};
use crate::numcore::{op_norm, proj_weighted_ball, Matrix, Rng, SpdMatrix, Vector};
use crate::ocoam::{covariance_check, unary_eval, unary_grad, CovarianceCheck, QuadLoss, DEFAULT_KAPPA_GRID};

pub const DEFAULT_DIAG_H: usize = 8;
pub const DEFAULT_GRID_STEP: f64 = 1e-3;
/// Blocks kept for `G_K` in the invertibility check; the tail is far below
/// the tolerance for closed loops with `ρ ≤ 0.7`.
pub const KAPPA_BLOCKS: usize = 160;
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaTrial {
    pub kappa: f64,
    pub bound: f64,
    /// `kappa − bound`.
    pub margin: f64,
    pub k_norm: f64,
}

fn random_plant(rng: &mut Rng) -> Result<LinearSystem> {
    let dx = 2 + (rng.next_u64() % 3) as usize;
    let du = 1 + (rng.next_u64() % 2) as usize;
    LinearSystem::random(rng, dx, du, 2, 0.9, 0.7)
}

/// Random stabilized plant; compares the grid estimate of `κ(G_K)` with
/// `¼·min{1, ‖K‖⁻²}`.
pub fn kappa_trial(rng: &mut Rng) -> Result<KappaTrial> {
    let sys = random_plant(rng)?;
    let g = sys.nominal_markov(KAPPA_BLOCKS)?;
    let kappa = g.kappa_lower_bound(DEFAULT_KAPPA_GRID)?;
    let k_norm = op_norm(sys.k())?;
    let bound = 0.25 * (1.0 / (k_norm * k_norm)).min(1.0);
    Ok(KappaTrial { kappa, bound, margin: kappa - bound, k_norm })
}

/// Gaussian contexts `Y_{1−h..t}` of shape `du × 4` against the kernel of a
/// random stabilized plant.
pub fn covariance_trial(rng: &mut Rng, t: usize, h: usize) -> Result<CovarianceCheck> {
    if t == 0 || h == 0 {
        return Err(Error::InvalidInput("covariance trial needs t, h >= 1".into()));
    }
    let sys = random_plant(rng)?;
    let g = sys.nominal_markov(h + 32)?;
    let ys: Vec<Matrix> = (0..t + h).map(|_| rng.gaussian_matrix(sys.du(), 4)).collect();
    covariance_check(&g, &ys, h, DEFAULT_KAPPA_GRID)
}

/// Largest relative error between `∇f` and central differences of `f` on a
/// random affine-quadratic instance.
pub fn gradcheck_trial(rng: &mut Rng) -> Result<f64> {
    let p = 1 + (rng.next_u64() % 5) as usize;
    let d = 1 + (rng.next_u64() % 6) as usize;
    let a = rng.gaussian_matrix(p, p);
    let q = a.transpose() * &a + Matrix::identity(p, p) * 0.1;
    let loss = QuadLoss::new(q, rng.gaussian_vector(p))?;
    let v = rng.gaussian_vector(p);
    let h = rng.gaussian_matrix(p, d);
    let z = rng.gaussian_vector(d);
    let grad = unary_grad(&loss, &v, &h, &z)?;
    let mut fd = Vector::zeros(d);
    for i in 0..d {
        let mut plus = z.clone();
        let mut minus = z.clone();
        plus[i] += FD_STEP;
        minus[i] -= FD_STEP;
        fd[i] = (unary_eval(&loss, &v, &h, &plus)? - unary_eval(&loss, &v, &h, &minus)?) / (2.0 * FD_STEP);
    }
    Ok((&fd - &grad).norm() / grad.norm().max(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionTrial {
    /// `obj(projection) − min over grid points in the ball`.
    pub gap: f64,
    /// `‖projection‖ − radius`.
    pub excess_norm: f64,
    pub radius: f64,
}

/// Weighted projection in two dimensions against exhaustive search on a grid
/// of spacing `step` clipped to the ball.
pub fn projection_trial(rng: &mut Rng, step: f64) -> Result<ProjectionTrial> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("grid step must be positive, got {step}")));
    }
    let b = rng.gaussian_matrix(2, 2);
    let l = b.transpose() * &b + Matrix::identity(2, 2) * 0.05;
    let radius = rng.uniform_range(0.5, 1.5);
    let z_tilde = rng.gaussian_vector(2) * 2.0;
    let proj = proj_weighted_ball(&SpdMatrix::new(l.clone())?, &z_tilde, radius)?;
    let obj = |x: f64, y: f64| {
        let (dx, dy) = (x - z_tilde[0], y - z_tilde[1]);
        l[(0, 0)] * dx * dx + (l[(0, 1)] + l[(1, 0)]) * dx * dy + l[(1, 1)] * dy * dy
    };
    let n = (radius / step).floor() as i64;
    let r2 = radius * radius;
    let mut best = f64::INFINITY;
    for i in -n..=n {
        let x = i as f64 * step;
        for j in -n..=n {
            let y = j as f64 * step;
            if x * x + y * y <= r2 {
                best = best.min(obj(x, y));
            }
        }
    }
    Ok(ProjectionTrial { gap: obj(proj[0], proj[1]) - best, excess_norm: proj.norm() - radius, radius })
}
