//! Dense kernels: SPD solves, weighted-ball projection, operator norms and
//! spectral estimates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const SYMMETRY_TOL: f64 = 1e-10;
const OP_NORM_MAX_ITERS: usize = 500;
const OP_NORM_TOL: f64 = 1e-12;
const BISECTION_MAX_ITERS: usize = 200;
const BISECTION_REL_TOL: f64 = 1e-9;
const POWER_OVERFLOW: f64 = 1e150;

pub fn ensure_finite_matrix(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

pub fn ensure_finite_vector(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest entrywise asymmetry relative to the largest entry (or 1).
pub fn asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let scale = max_abs(m).max(1.0);
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Symmetric positive-definite matrix.
///
/// Symmetry is checked on construction. Positivity is not re-verified eagerly;
/// every solve goes through a Cholesky factorization that reports the failing
/// pivot if it is lost.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(Matrix);

impl SpdMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim("SpdMatrix::new", "square", format!("{}x{}", m.nrows(), m.ncols())));
        }
        ensure_finite_matrix(&m, "SPD matrix")?;
        let asym = asymmetry(&m);
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidInput(format!("matrix is not symmetric (relative asymmetry {asym:e})")));
        }
        Ok(SpdMatrix(m))
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput(format!("identity scale must be positive, got {scale}")));
        }
        Ok(SpdMatrix(Matrix::identity(dim, dim) * scale))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// `self += hᵀh`, written so the result stays exactly symmetric.
    pub fn add_gram(&mut self, h: &Matrix) -> Result<()> {
        if h.ncols() != self.dim() {
            return Err(Error::dim("SpdMatrix::add_gram", self.dim(), h.ncols()));
        }
        let d = self.dim();
        let gram = h.transpose() * h;
        for i in 0..d {
            for j in 0..=i {
                let v = 0.5 * (gram[(i, j)] + gram[(j, i)]);
                self.0[(i, j)] += v;
                if i != j {
                    self.0[(j, i)] += v;
                }
            }
        }
        Ok(())
    }

    /// `self += g gᵀ` for a vector `g`.
    pub fn add_outer(&mut self, g: &Vector) -> Result<()> {
        if g.len() != self.dim() {
            return Err(Error::dim("SpdMatrix::add_outer", self.dim(), g.len()));
        }
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                self.0[(i, j)] += g[i] * g[j];
            }
        }
        Ok(())
    }
}

/// Lower Cholesky factor `l` with `l lᵀ = a`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &Matrix, b: &Vector) -> Vector {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solves `L x = b` through a fresh Cholesky factorization.
pub fn spd_solve(l: &SpdMatrix, b: &Vector) -> Result<Vector> {
    if b.len() != l.dim() {
        return Err(Error::dim("spd_solve", l.dim(), b.len()));
    }
    ensure_finite_vector(b, "right-hand side")?;
    let factor = cholesky(l.as_matrix())?;
    Ok(cholesky_solve(&factor, b))
}

/// Minimizer of `zᵀPz − 2qᵀz` over the Euclidean ball `‖z‖ ≤ radius`, for a
/// symmetric PSD `P`.
///
/// Works in the eigenbasis of `P`: `z(μ) = (P + μI)⁻¹ q` and `‖z(μ)‖` is
/// monotone decreasing in `μ ≥ 0`, so the active multiplier is found by
/// bisection on `[0, mu_hi]`. Directions where `P` is flat and `q` has no
/// component are dropped, which selects the minimum-norm solution.
pub(crate) fn ball_constrained_quadratic(
    p: &Matrix,
    q: &Vector,
    radius: f64,
    mu_hi: f64,
) -> Result<Vector> {
    let eig = SymmetricEigen::new(p.clone());
    let lam_max = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let flat_tol = 1e-12 * lam_max.max(1.0);
    let coeffs = eig.eigenvectors.transpose() * q;
    let q_scale = q.norm().max(f64::MIN_POSITIVE);

    let mut unbounded = false;
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -1e-8 * lam_max.max(1.0) {
            return Err(Error::Numeric(format!("quadratic is indefinite: eigenvalue {lam:e}")));
        }
        if lam <= flat_tol && coeffs[i].abs() > 1e-12 * q_scale {
            unbounded = true;
        }
    }

    let z_of = |mu: f64| -> Vector {
        let mut w = Vector::zeros(coeffs.len());
        for i in 0..coeffs.len() {
            let lam = eig.eigenvalues[i].max(0.0);
            let denom = lam + mu;
            if denom > flat_tol {
                w[i] = coeffs[i] / denom;
            }
        }
        &eig.eigenvectors * w
    };

    if !unbounded {
        let z0 = z_of(0.0);
        if z0.norm() <= radius {
            return Ok(z0);
        }
    }

    let mut lo = 0.0_f64;
    let mut hi = mu_hi.max(f64::MIN_POSITIVE);
    // The bracket end must be feasible; widen defensively against rounding.
    while z_of(hi).norm() > radius {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numeric("bisection bracket overflowed".into()));
        }
    }
    let mut best = z_of(hi);
    for _ in 0..BISECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        let z = z_of(mid);
        let n = z.norm();
        // Only accept from the feasible side so the output never leaves the ball.
        if n <= radius && radius - n <= BISECTION_REL_TOL * radius {
            return Ok(z);
        }
        if n > radius {
            lo = mid;
        } else {
            hi = mid;
            best = z;
        }
    }
    Ok(best)
}

/// Projection of `z_tilde` onto `{‖z‖ ≤ radius}` in the norm `‖L^{1/2}·‖`.
pub fn proj_weighted_ball(l: &SpdMatrix, z_tilde: &Vector, radius: f64) -> Result<Vector> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidInput(format!("projection radius must be positive, got {radius}")));
    }
    if z_tilde.len() != l.dim() {
        return Err(Error::dim("proj_weighted_ball", l.dim(), z_tilde.len()));
    }
    ensure_finite_vector(z_tilde, "projection target")?;
    if z_tilde.norm() <= radius {
        return Ok(z_tilde.clone());
    }
    let q = l.as_matrix() * z_tilde;
    let mu_hi = op_norm(l.as_matrix())? * z_tilde.norm() / radius;
    ball_constrained_quadratic(l.as_matrix(), &q, radius, mu_hi)
}

/// Largest singular value by power iteration on the smaller Gram matrix.
pub fn op_norm(m: &Matrix) -> Result<f64> {
    ensure_finite_matrix(m, "operator-norm input")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let gram = if m.nrows() < m.ncols() { m * m.transpose() } else { m.transpose() * m };
    let n = gram.nrows();
    // Start from the heaviest column of the Gram matrix; it is nonzero whenever
    // the matrix is.
    let mut start = 0;
    for j in 1..n {
        if gram[(j, j)] > gram[(start, start)] {
            start = j;
        }
    }
    if gram[(start, start)] == 0.0 {
        return Ok(0.0);
    }
    let mut v: Vector = gram.column(start).into_owned();
    let mut nv = v.norm();
    if nv == 0.0 {
        return Ok(0.0);
    }
    v /= nv;
    let mut rayleigh = v.dot(&(&gram * &v));
    for _ in 0..OP_NORM_MAX_ITERS {
        let w = &gram * &v;
        nv = w.norm();
        if nv == 0.0 {
            break;
        }
        v = w / nv;
        let next = v.dot(&(&gram * &v));
        let converged = (next - rayleigh).abs() <= OP_NORM_TOL * next.abs();
        rayleigh = next;
        if converged {
            break;
        }
    }
    Ok(rayleigh.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub value: f64,
    /// Set when powering overflowed; `value` is then only a lower bound ≥ 1.
    pub unstable: bool,
}

/// `‖M^n‖_op^{1/n}`, an upper-biased estimate of the spectral radius.
pub fn spectral_radius_estimate(m: &Matrix, n_power: usize) -> Result<SpectralEstimate> {
    if !m.is_square() {
        return Err(Error::dim("spectral_radius_estimate", "square", format!("{}x{}", m.nrows(), m.ncols())));
    }
    if n_power == 0 {
        return Err(Error::InvalidInput("n_power must be at least 1".into()));
    }
    ensure_finite_matrix(m, "spectral-radius input")?;
    let n = m.nrows();
    let mut acc = Matrix::identity(n, n);
    for step in 1..=n_power {
        acc = &acc * m;
        let big = max_abs(&acc);
        if big > POWER_OVERFLOW || !big.is_finite() {
            let lower = if big.is_finite() { big.powf(1.0 / step as f64) } else { 1.0 };
            return Ok(SpectralEstimate { value: lower.max(1.0), unstable: true });
        }
    }
    let value = op_norm(&acc)?.powf(1.0 / n_power as f64);
    Ok(SpectralEstimate { value, unstable: value >= 1.0 })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn eig_min_sym(s: &Matrix) -> Result<f64> {
    if !s.is_square() {
        return Err(Error::dim("eig_min_sym", "square", format!("{}x{}", s.nrows(), s.ncols())));
    }
    ensure_finite_matrix(s, "symmetric eigen input")?;
    let asym = asymmetry(s);
    if asym > 1e-8 {
        return Err(Error::InvalidInput(format!("matrix is not symmetric (relative asymmetry {asym:e})")));
    }
    if s.is_empty() {
        return Err(Error::InvalidInput("empty matrix has no eigenvalues".into()));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}
