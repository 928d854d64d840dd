//! Partially observed LTI plants with a static stabilizing gain.

use crate::error::{Error, Result};
use crate::numcore::linalg::ensure_finite_matrix;
use crate::numcore::{op_norm, spectral_radius_estimate, Matrix, Rng, Vector};
use crate::ocoam::MarkovOperator;

/// Powers used for every stability check and for choosing `h`.
pub const RHO_POWERS: usize = 64;

/// `x_{t+1} = A x_t + B u_t + w_t`, `y_t = C x_t + e_t`, stabilized by `u = K y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    k: Matrix,
    rho: f64,
}

impl LinearSystem {
    /// Checks shapes and that `A + BKC` passes the spectral-radius test.
    pub fn new(a: Matrix, b: Matrix, c: Matrix, k: Matrix) -> Result<Self> {
        let dx = a.nrows();
        if !a.is_square() {
            return Err(Error::dim("LinearSystem A", "square", format!("{}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != dx {
            return Err(Error::dim("LinearSystem B rows", dx, b.nrows()));
        }
        if c.ncols() != dx {
            return Err(Error::dim("LinearSystem C cols", dx, c.ncols()));
        }
        if k.shape() != (b.ncols(), c.nrows()) {
            return Err(Error::dim(
                "LinearSystem K",
                format!("{}x{}", b.ncols(), c.nrows()),
                format!("{}x{}", k.nrows(), k.ncols()),
            ));
        }
        for (m, name) in [(&a, "A"), (&b, "B"), (&c, "C"), (&k, "K")] {
            ensure_finite_matrix(m, name)?;
        }
        let acl = &a + &b * &k * &c;
        let est = spectral_radius_estimate(&acl, RHO_POWERS)?;
        if est.unstable || est.value >= 1.0 {
            return Err(Error::Unstable { rho: est.value });
        }
        Ok(LinearSystem { a, b, c, k, rho: est.value })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    pub fn dx(&self) -> usize {
        self.a.nrows()
    }

    pub fn du(&self) -> usize {
        self.b.ncols()
    }

    pub fn dy(&self) -> usize {
        self.c.nrows()
    }

    /// `A + BKC`.
    pub fn closed_loop(&self) -> Matrix {
        &self.a + &self.b * &self.k * &self.c
    }

    /// Spectral-radius estimate of the closed loop, `‖(A+BKC)^64‖^{1/64}`.
    pub fn rho_estimate(&self) -> f64 {
        self.rho
    }

    /// Same plant with another stabilizing gain.
    pub fn with_gain(&self, k: Matrix) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.c.clone(), k)
    }

    /// `h = ⌈log T / (1 − ρ̂)⌉`, at least 1.
    pub fn default_memory(&self, horizon: usize) -> usize {
        let log_t = (horizon.max(2) as f64).ln();
        ((log_t / (1.0 - self.rho)).ceil() as usize).max(1)
    }

    /// Nominal Markov operator `G_K` with blocks `0..=h`:
    /// `G^{[0]} = [0; I]`, `G^{[i]} = [C; KC](A+BKC)^{i−1}B`.
    pub fn nominal_markov(&self, h: usize) -> Result<MarkovOperator> {
        if h == 0 {
            return Err(Error::InvalidInput("nominal Markov operator needs h >= 1".into()));
        }
        let (dy, du) = (self.dy(), self.du());
        let mut g0 = Matrix::zeros(dy + du, du);
        g0.view_mut((dy, 0), (du, du)).fill_with_identity();
        let mut out = Matrix::zeros(dy + du, self.dx());
        out.view_mut((0, 0), (dy, self.dx())).copy_from(&self.c);
        out.view_mut((dy, 0), (du, self.dx())).copy_from(&(&self.k * &self.c));
        let acl = self.closed_loop();
        let mut blocks = Vec::with_capacity(h + 1);
        blocks.push(g0);
        let mut power_b = self.b.clone();
        for _ in 1..=h {
            blocks.push(&out * &power_b);
            power_b = &acl * power_b;
        }
        MarkovOperator::new(blocks)
    }

    /// `Σ_{j≥0} ‖C (A+BKC)^j‖_op`, the gain from state disturbances to nominal
    /// outputs, summed until the terms fall below `1e-14` of the running total.
    pub fn disturbance_gain(&self) -> Result<f64> {
        let acl = self.closed_loop();
        let mut term = self.c.clone();
        let mut total = 0.0;
        for _ in 0..100_000 {
            let n = op_norm(&term)?;
            total += n;
            if n <= 1e-14 * total.max(1e-300) || n == 0.0 {
                return Ok(total);
            }
            term = &term * &acl;
        }
        Err(Error::Numeric("disturbance gain series did not converge".into()))
    }

    /// Bound on `‖(y^K_t, u^K_t)‖` for `‖w‖ ≤ w_max`, `‖e‖ ≤ e_max` and `x₁ = 0`.
    pub fn nat_radius(&self, w_max: f64, e_max: f64) -> Result<f64> {
        // x^K_{t+1} = (A+BKC) x^K_t + w_t + BK e_t, so measurement noise also
        // enters the state through the feedback.
        let gain = self.disturbance_gain()?;
        let k_norm = op_norm(&self.k)?;
        let bk_norm = op_norm(&(&self.b * &self.k))?;
        Ok((1.0 + k_norm) * (gain * (w_max + bk_norm * e_max) + e_max))
    }

    /// Random plant: `A` Gaussian rescaled to spectral radius `open_loop_rho`,
    /// Gaussian `B` and `C`, and `K` chosen by [`stabilizing_gain`] to bring the
    /// closed loop to spectral radius `target_rho` or below. Plants for which the
    /// search falls short are redrawn, up to [`RANDOM_PLANT_ATTEMPTS`] times.
    pub fn random(rng: &mut Rng, dx: usize, du: usize, dy: usize, open_loop_rho: f64, target_rho: f64) -> Result<Self> {
        let mut best_rho = f64::INFINITY;
        for _ in 0..RANDOM_PLANT_ATTEMPTS {
            let raw = rng.gaussian_matrix(dx, dx);
            let r = spectral_radius(&raw);
            let a = if r > 0.0 { raw * (open_loop_rho / r) } else { raw };
            let b = rng.gaussian_matrix(dx, du);
            let c = rng.gaussian_matrix(dy, dx);
            match stabilizing_gain(&a, &b, &c, rng, 2000, target_rho) {
                Ok(k) => {
                    let rho = spectral_radius(&(&a + &b * &k * &c));
                    if rho <= target_rho {
                        return Self::new(a, b, c, k);
                    }
                    best_rho = best_rho.min(rho);
                }
                Err(Error::Unstable { rho }) => best_rho = best_rho.min(rho),
                Err(e) => return Err(e),
            }
        }
        Err(Error::Unstable { rho: best_rho })
    }
}

/// Plant redraws allowed in [`LinearSystem::random`].
pub const RANDOM_PLANT_ATTEMPTS: usize = 64;

/// Largest eigenvalue modulus, from the real Schur form.
pub fn spectral_radius(m: &Matrix) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Random-search minimization of `ρ(A + BKC)` starting from `K = 0`, stopping
/// as soon as `ρ ≤ target`.
///
/// Each round perturbs the incumbent with Gaussian noise at a shrinking scale
/// and keeps improvements. Fails when no stabilizing gain is found.
pub fn stabilizing_gain(a: &Matrix, b: &Matrix, c: &Matrix, rng: &mut Rng, rounds: usize, target: f64) -> Result<Matrix> {
    let (du, dy) = (b.ncols(), c.nrows());
    let rho_of = |k: &Matrix| spectral_radius(&(a + b * k * c));
    let mut best = Matrix::zeros(du, dy);
    let mut best_rho = rho_of(&best);
    let mut scale = 0.5;
    for round in 0..rounds {
        if best_rho <= target {
            break;
        }
        let cand = &best + rng.gaussian_matrix(du, dy) * scale;
        let r = rho_of(&cand);
        if r < best_rho {
            best = cand;
            best_rho = r;
        }
        if round % 100 == 99 {
            scale *= 0.7;
        }
    }
    if best_rho >= 1.0 {
        return Err(Error::Unstable { rho: best_rho });
    }
    Ok(best)
}

/// `x_{t+1} = Ax + Bu + w`, `y = Cx + e`.
pub fn simulate_step(sys: &LinearSystem, x: &Vector, u: &Vector, w: &Vector, e: &Vector) -> (Vector, Vector) {
    let mut x_next = w.clone();
    x_next.gemv(1.0, &sys.a, x, 1.0);
    x_next.gemv(1.0, &sys.b, u, 1.0);
    let mut y = e.clone();
    y.gemv(1.0, &sys.c, x, 1.0);
    (x_next, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, vals: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, vals)
    }

    fn nilpotent() -> LinearSystem {
        LinearSystem::new(m(2, 2, &[0.0, 1.0, 0.0, 0.0]), m(2, 1, &[0.0, 1.0]), Matrix::identity(2, 2), Matrix::zeros(1, 2))
            .unwrap()
    }

    #[test]
    fn nilpotent_markov_blocks() {
        let g = nilpotent().nominal_markov(4).unwrap();
        assert_eq!(g.block(0).unwrap(), &m(3, 1, &[0.0, 0.0, 1.0]));
        assert_eq!(g.block(1).unwrap(), &m(3, 1, &[0.0, 1.0, 0.0]));
        assert_eq!(g.block(2).unwrap(), &m(3, 1, &[1.0, 0.0, 0.0]));
        assert_eq!(g.block(3).unwrap(), &Matrix::zeros(3, 1));
        assert_eq!(g.block(4).unwrap(), &Matrix::zeros(3, 1));
    }

    #[test]
    fn zero_input_matrix_gives_trivial_markov() {
        let sys = LinearSystem::new(Matrix::identity(2, 2) * 0.5, Matrix::zeros(2, 1), Matrix::identity(2, 2), Matrix::zeros(1, 2))
            .unwrap();
        let g = sys.nominal_markov(3).unwrap();
        assert_eq!(g.block(0).unwrap(), &m(3, 1, &[0.0, 0.0, 1.0]));
        for i in 1..=3 {
            assert_eq!(g.block(i).unwrap(), &Matrix::zeros(3, 1));
        }
    }

    #[test]
    fn rejects_unstable_and_bad_shapes() {
        let r = LinearSystem::new(Matrix::identity(1, 1) * 1.2, Matrix::zeros(1, 1), Matrix::identity(1, 1), Matrix::zeros(1, 1));
        assert!(matches!(r, Err(Error::Unstable { .. })));
        assert!(LinearSystem::new(Matrix::zeros(2, 2), Matrix::zeros(3, 1), Matrix::identity(2, 2), Matrix::zeros(1, 2)).is_err());
        assert!(nilpotent().nominal_markov(0).is_err());
    }

    #[test]
    fn random_markov_decay_matches_spectral_radius() {
        let mut rng = Rng::new(5);
        for _ in 0..5 {
            let sys = LinearSystem::random(&mut rng, 3, 1, 2, 0.9, 0.7).unwrap();
            let h = 40;
            let g = sys.nominal_markov(h).unwrap();
            // Fit log‖G^{[i]}‖ ≈ log c + i log ρ over the tail i ∈ [h/2, h].
            let pts: Vec<(f64, f64)> = (h / 2..=h)
                .map(|i| (i as f64, g.block_norms()[i].max(1e-300).ln()))
                .collect();
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let rho_fit = (sxy / sxx).exp();
            assert!(rho_fit <= sys.rho_estimate() + 0.05, "fit {rho_fit} vs {}", sys.rho_estimate());
        }
    }

    #[test]
    fn simulate_step_examples() {
        let sys = nilpotent();
        let z2 = Vector::zeros(2);
        let (x, y) = simulate_step(&sys, &z2, &Vector::zeros(1), &z2, &z2);
        assert_eq!((x, y), (z2.clone(), z2.clone()));

        let sys = LinearSystem::new(Matrix::zeros(2, 2), Matrix::identity(2, 2), Matrix::identity(2, 2), Matrix::zeros(2, 2)).unwrap();
        let v = Vector::from_vec(vec![0.3, -1.0]);
        let w = Vector::from_vec(vec![1.0, 2.0]);
        let (x, _) = simulate_step(&sys, &Vector::from_vec(vec![5.0, 5.0]), &v, &w, &z2);
        assert_eq!(x, &v + &w);
    }

    #[test]
    fn simulate_step_matches_matvec_oracle() {
        let mut rng = Rng::new(8);
        let sys = LinearSystem::random(&mut rng, 3, 2, 2, 0.8, 0.6).unwrap();
        let (x, u, w, e) = (rng.gaussian_vector(3), rng.gaussian_vector(2), rng.gaussian_vector(3), rng.gaussian_vector(2));
        let (xn, y) = simulate_step(&sys, &x, &u, &w, &e);
        for i in 0..3 {
            let mut acc = w[i];
            for j in 0..3 {
                acc += sys.a()[(i, j)] * x[j];
            }
            for j in 0..2 {
                acc += sys.b()[(i, j)] * u[j];
            }
            assert!((xn[i] - acc).abs() < 1e-12);
        }
        for i in 0..2 {
            let acc: f64 = e[i] + (0..3).map(|j| sys.c()[(i, j)] * x[j]).sum::<f64>();
            assert!((y[i] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn stabilizing_gain_fixes_unstable_plant() {
        let mut rng = Rng::new(3);
        let sys = LinearSystem::random(&mut rng, 3, 1, 2, 1.3, 0.9).unwrap();
        assert!(spectral_radius(&sys.closed_loop()) < 1.0);
        assert!(sys.k().norm() > 0.0);
    }

    #[test]
    fn nat_radius_bounds_nominal_run() {
        let mut rng = Rng::new(12);
        let sys = LinearSystem::random(&mut rng, 3, 1, 2, 0.9, 0.7).unwrap();
        let r = sys.nat_radius(1.0, 0.5).unwrap();
        let mut x = Vector::zeros(3);
        for _ in 0..2000 {
            let w = rng.sphere_vector(3, 1.0);
            let e = rng.sphere_vector(2, 0.5);
            let y = sys.c() * &x + &e;
            let u = sys.k() * &y;
            let mut v = Vector::zeros(3);
            v.rows_mut(0, 2).copy_from(&y);
            v.rows_mut(2, 1).copy_from(&u);
            assert!(v.norm() <= r * (1.0 + 1e-9));
            x = sys.a() * &x + sys.b() * &u + w;
        }
    }
}
