use crate::error::{Error, Result};
use crate::numcore::linalg::{ensure_finite_vector, SpdMatrix};
use crate::numcore::{eig_min_sym, op_norm, Matrix, Vector};

/// Time-varying quadratic `ℓ(v) = (v − g)ᵀ Q (v − g)`.
///
/// The Hessian is `2Q`, so the strong-convexity modulus is `2·λ_min(Q)` and the
/// smoothness constant `2·‖Q‖_op`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadLoss {
    q: SpdMatrix,
    target: Vector,
    curvature: f64,
    smoothness: f64,
}

impl QuadLoss {
    pub fn new(q: Matrix, target: Vector) -> Result<Self> {
        if q.nrows() != target.len() {
            return Err(Error::dim("QuadLoss::new", q.nrows(), target.len()));
        }
        ensure_finite_vector(&target, "loss target")?;
        let q = SpdMatrix::new(q)?;
        let lam_min = eig_min_sym(q.as_matrix())?;
        if !(lam_min > 0.0) {
            return Err(Error::InvalidInput(format!(
                "loss curvature must be positive definite (λ_min = {lam_min:e})"
            )));
        }
        let smoothness = 2.0 * op_norm(q.as_matrix())?;
        Ok(QuadLoss { q, target, curvature: 2.0 * lam_min, smoothness })
    }

    /// As [`QuadLoss::new`], additionally checking `alpha·I ⪯ ∇²ℓ ⪯ smooth·I`.
    pub fn with_bounds(q: Matrix, target: Vector, alpha: f64, smooth: f64) -> Result<Self> {
        if !(alpha > 0.0) || smooth < alpha {
            return Err(Error::InvalidInput(format!("need 0 < alpha <= smooth, got {alpha}, {smooth}")));
        }
        let loss = Self::new(q, target)?;
        let tol = 1e-12 * smooth.max(1.0);
        if loss.curvature + tol < alpha || loss.smoothness > smooth + tol {
            return Err(Error::InvalidInput(format!(
                "Hessian spectrum [{}, {}] outside [{alpha}, {smooth}]",
                loss.curvature, loss.smoothness
            )));
        }
        Ok(loss)
    }

    /// `‖v‖²` in dimension `p`.
    pub fn squared_norm(p: usize) -> Self {
        Self::new(Matrix::identity(p, p), Vector::zeros(p)).expect("identity loss is valid")
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    pub fn q(&self) -> &Matrix {
        self.q.as_matrix()
    }

    pub fn target(&self) -> &Vector {
        &self.target
    }

    /// Strong-convexity modulus α of `ℓ`.
    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    /// Smoothness constant of `ℓ`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn eval(&self, v: &Vector) -> f64 {
        let r = v - &self.target;
        r.dot(&(self.q.as_matrix() * &r))
    }

    pub fn grad(&self, v: &Vector) -> Vector {
        (self.q.as_matrix() * (v - &self.target)) * 2.0
    }
}
