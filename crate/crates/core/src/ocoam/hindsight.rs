//! Exact best fixed comparator for a sequence of quadratic unary losses.

use super::loss::QuadLoss;
use crate::error::{Error, Result};
use crate::numcore::linalg::ball_constrained_quadratic;
use crate::numcore::{Matrix, Vector};

/// Running sums for `Σ_t f_t(z) = zᵀPz − 2qᵀz + r` with
/// `P = Σ HᵀQH`, `q = Σ HᵀQ(g − v)` and `r = Σ ℓ_t(v_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HindsightAccumulator {
    p: Matrix,
    q: Vector,
    r: f64,
    count: usize,
}

impl HindsightAccumulator {
    pub fn new(d: usize) -> Self {
        HindsightAccumulator { p: Matrix::zeros(d, d), q: Vector::zeros(d), r: 0.0, count: 0 }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn add(&mut self, loss: &QuadLoss, v: &Vector, h: &Matrix) -> Result<()> {
        if h.ncols() != self.dim() || h.nrows() != loss.dim() || v.len() != loss.dim() {
            return Err(Error::dim(
                "HindsightAccumulator::add",
                format!("H {}x{}", loss.dim(), self.dim()),
                format!("H {}x{}, v {}", h.nrows(), h.ncols(), v.len()),
            ));
        }
        let qh = loss.q() * h;
        self.p.gemm_tr(1.0, h, &qh, 1.0);
        let resid = loss.target() - v;
        self.q.gemv_tr(1.0, &qh, &resid, 1.0);
        self.r += loss.eval(v);
        self.count += 1;
        Ok(())
    }

    /// `Σ_t f_t(z)` from the accumulated quadratic form.
    pub fn value(&self, z: &Vector) -> f64 {
        z.dot(&(&self.p * z)) - 2.0 * self.q.dot(z) + self.r
    }

    /// Constrained minimizer over `‖z‖ ≤ radius` and the minimum value.
    /// Flat directions resolve to the minimum-norm solution.
    pub fn solve(&self, radius: f64) -> Result<(Vector, f64)> {
        if self.count == 0 {
            return Err(Error::InvalidInput("best-in-hindsight needs at least one loss".into()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
        }
        let sym = (&self.p + self.p.transpose()) * 0.5;
        let mu_hi = self.q.norm() / radius;
        let z = ball_constrained_quadratic(&sym, &self.q, radius, mu_hi)?;
        // The closed form cancels large terms; clamp the tiny negative residue
        // that can appear when the comparator attains zero loss.
        let value = self.value(&z).max(0.0);
        Ok((z, value))
    }
}

/// `min_{‖z‖ ≤ radius} Σ_t ℓ_t(v_t + H_t z)`, returning the minimizer and value.
pub fn best_in_hindsight(losses: &[(QuadLoss, Vector, Matrix)], radius: f64) -> Result<(Vector, f64)> {
    let first = losses
        .first()
        .ok_or_else(|| Error::InvalidInput("best-in-hindsight needs at least one loss".into()))?;
    let mut acc = HindsightAccumulator::new(first.2.ncols());
    for (loss, v, h) in losses {
        acc.add(loss, v, h)?;
    }
    acc.solve(radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;
    use crate::ocoam::semions::unary_eval;

    fn scalar_loss(q: f64, g: f64) -> QuadLoss {
        QuadLoss::new(Matrix::from_element(1, 1, q), Vector::from_element(1, g)).unwrap()
    }

    #[test]
    fn interior_minimizer_with_zero_value() {
        let mut rng = Rng::new(3);
        let h = rng.gaussian_matrix(3, 3) + Matrix::identity(3, 3) * 3.0;
        let z_star = rng.gaussian_vector(3) * 0.1;
        let v = rng.gaussian_vector(3);
        let loss = QuadLoss::new(Matrix::identity(3, 3), &v + &h * &z_star).unwrap();
        let (z, value) = best_in_hindsight(&[(loss, v, h)], 10.0).unwrap();
        assert!((&z - &z_star).norm() < 1e-9);
        assert!(value.abs() < 1e-12);
    }

    #[test]
    fn degenerate_kernel_ties_to_origin() {
        let mut rng = Rng::new(5);
        let losses: Vec<_> = (0..4)
            .map(|_| {
                let v = rng.gaussian_vector(2);
                (QuadLoss::squared_norm(2), v, Matrix::zeros(2, 3))
            })
            .collect();
        let expected: f64 = losses.iter().map(|(l, v, _)| l.eval(v)).sum();
        let (z, value) = best_in_hindsight(&losses, 1.0).unwrap();
        assert_eq!(z, Vector::zeros(3));
        assert!((value - expected).abs() < 1e-12);
        assert!(best_in_hindsight(&[], 1.0).is_err());
    }

    #[test]
    fn scalar_losses_match_grid_scan() {
        let mut rng = Rng::new(10);
        let radius: f64 = 0.7;
        let losses: Vec<_> = (0..10)
            .map(|_| {
                let loss = scalar_loss(rng.uniform_range(0.2, 2.0), rng.gaussian() * 2.0);
                (loss, Vector::from_element(1, rng.gaussian()), Matrix::from_element(1, 1, rng.gaussian()))
            })
            .collect();
        let total = |z: f64| -> f64 {
            losses
                .iter()
                .map(|(l, v, h)| unary_eval(l, v, h, &Vector::from_element(1, z)).unwrap())
                .sum()
        };
        let steps = (2.0 * radius / 1e-4).round() as usize;
        let mut grid_best = f64::INFINITY;
        for k in 0..=steps {
            grid_best = grid_best.min(total(-radius + k as f64 * 1e-4));
        }
        let (z, value) = best_in_hindsight(&losses, radius).unwrap();
        assert!(z[0].abs() <= radius * (1.0 + 1e-9));
        assert!((value - total(z[0])).abs() < 1e-9);
        assert!(value <= grid_best + 1e-12);
        // Curvature bound on the grid error: ΣP·(half step)².
        let curv: f64 = losses.iter().map(|(l, _, h)| l.q()[(0, 0)] * h[(0, 0)].powi(2)).sum();
        assert!(grid_best - value <= curv * 0.25e-8 + 1e-12);
    }

    #[test]
    fn accumulated_value_matches_direct_sum() {
        let mut rng = Rng::new(21);
        let mut acc = HindsightAccumulator::new(4);
        let mut items = Vec::new();
        for _ in 0..12 {
            let a = rng.gaussian_matrix(2, 2);
            let q = &a * a.transpose() + Matrix::identity(2, 2);
            let loss = QuadLoss::new((&q + q.transpose()) * 0.5, rng.gaussian_vector(2)).unwrap();
            let (v, h) = (rng.gaussian_vector(2), rng.gaussian_matrix(2, 4));
            acc.add(&loss, &v, &h).unwrap();
            items.push((loss, v, h));
        }
        let z = rng.gaussian_vector(4);
        let direct: f64 = items.iter().map(|(l, v, h)| unary_eval(l, v, h, &z).unwrap()).sum();
        assert!((acc.value(&z) - direct).abs() < 1e-10 * direct);
    }
}
