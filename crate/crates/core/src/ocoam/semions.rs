//! Affine-memory losses and the Semi-ONS optimizer.

use std::collections::VecDeque;

use super::loss::QuadLoss;
use super::markov::MarkovOperator;
use crate::error::{Error, Result};
use crate::numcore::{proj_weighted_ball, spd_solve, Matrix, SpdMatrix, Vector};

/// What the learner sees at step `t`: the context matrix `Y_t` (`d_in × d`),
/// the exact offset `v_t` and, in the approximate setting, an estimate `v̂_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineContext {
    pub y: Matrix,
    pub v: Vector,
    pub v_hat: Option<Vector>,
}

impl AffineContext {
    pub fn exact(y: Matrix, v: Vector) -> Self {
        AffineContext { y, v, v_hat: None }
    }

    pub fn approximate(y: Matrix, v: Vector, v_hat: Vector) -> Self {
        AffineContext { y, v, v_hat: Some(v_hat) }
    }

    /// Offset the optimizer should use: `v̂_t` when present, else `v_t`.
    pub fn learner_offset(&self) -> &Vector {
        self.v_hat.as_ref().unwrap_or(&self.v)
    }
}

/// `H_t = Σ_{i=0}^{h} G^{[i]} Y_{t−i}`.
///
/// `ys[i]` is `Y_{t−i}`; entries past the end of `ys` are zero (no history
/// before the first step), and extra entries beyond `G`'s length are ignored.
pub fn make_h<'a, I>(g: &MarkovOperator, ys: I, d: usize) -> Result<Matrix>
where
    I: IntoIterator<Item = &'a Matrix>,
{
    let mut h = Matrix::zeros(g.out_dim(), d);
    for (block, y) in g.blocks().iter().zip(ys) {
        if y.nrows() != g.in_dim() || y.ncols() != d {
            return Err(Error::dim(
                "make_h",
                format!("{}x{}", g.in_dim(), d),
                format!("{}x{}", y.nrows(), y.ncols()),
            ));
        }
        h.gemm(1.0, block, y, 1.0);
    }
    Ok(h)
}

fn affine_point(v: &Vector, h: &Matrix, z: &Vector) -> Result<Vector> {
    if h.ncols() != z.len() || h.nrows() != v.len() {
        return Err(Error::dim(
            "affine loss",
            format!("H {}x{}, v {}", v.len(), z.len(), v.len()),
            format!("H {}x{}, v {}", h.nrows(), h.ncols(), v.len()),
        ));
    }
    Ok(v + h * z)
}

/// `f_t(z) = ℓ_t(v + H z)`.
pub fn unary_eval(loss: &QuadLoss, v: &Vector, h: &Matrix, z: &Vector) -> Result<f64> {
    Ok(loss.eval(&affine_point(v, h, z)?))
}

/// `∇f_t(z) = Hᵀ ∇ℓ_t(v + H z)`.
pub fn unary_grad(loss: &QuadLoss, v: &Vector, h: &Matrix, z: &Vector) -> Result<Vector> {
    Ok(h.transpose() * loss.grad(&affine_point(v, h, z)?))
}

/// With-memory loss `F_t(z_{t:t−h}) = ℓ_t(v_t + Σ_i G^{[i]} Y_{t−i} z_{t−i})`.
///
/// `ys[i]` and `zs[i]` are `Y_{t−i}` and `z_{t−i}`; missing history counts as zero.
pub fn memory_eval(loss: &QuadLoss, g: &MarkovOperator, v: &Vector, ys: &[Matrix], zs: &[Vector]) -> Result<f64> {
    let mut point = v.clone();
    for ((block, y), z) in g.blocks().iter().zip(ys).zip(zs) {
        if y.ncols() != z.len() || y.nrows() != g.in_dim() {
            return Err(Error::dim("memory_eval", y.ncols(), z.len()));
        }
        point += block * (y * z);
    }
    Ok(loss.eval(&point))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiOnsConfig {
    pub eta: f64,
    pub lambda: f64,
    pub radius: f64,
}

impl SemiOnsConfig {
    /// `η = 1/α`, `λ = 6 h R_Y² R_G²`. A zero memory length is treated as 1 so
    /// the regularizer stays positive.
    pub fn exact_defaults(alpha: f64, h: usize, r_y: f64, r_g: f64, radius: f64) -> Self {
        SemiOnsConfig {
            eta: 1.0 / alpha,
            lambda: 6.0 * h.max(1) as f64 * r_y * r_y * r_g * r_g,
            radius,
        }
    }

    /// `η = 3/α`, `λ = T ε_G² + h R_G²`.
    pub fn approximate_defaults(alpha: f64, h: usize, horizon: usize, eps_g: f64, r_g: f64, radius: f64) -> Self {
        SemiOnsConfig {
            eta: 3.0 / alpha,
            lambda: horizon as f64 * eps_g * eps_g + h.max(1) as f64 * r_g * r_g,
            radius,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("eta", self.eta), ("lambda", self.lambda), ("radius", self.radius)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("Semi-ONS {name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// What one Semi-ONS step consumed and produced.
#[derive(Debug, Clone)]
pub struct SemiOnsStep {
    pub h: Matrix,
    pub grad: Vector,
    pub z_played: Vector,
    pub z_next: Vector,
}

/// Semi-ONS iterate, preconditioner and context history.
///
/// The preconditioner is `Λ_t = λI + Σ_{s≤t} H_sᵀH_s`; the update at time `t`
/// folds `H_t` in before stepping, then projects in the `Λ_t` norm onto the
/// Euclidean ball of radius `radius`.
#[derive(Debug, Clone)]
pub struct SemiOnsState {
    z: Vector,
    lambda_mat: SpdMatrix,
    config: SemiOnsConfig,
    t: usize,
    history: VecDeque<Matrix>,
}

impl SemiOnsState {
    /// Starts at the origin, which the constraint ball always contains.
    pub fn new(dim: usize, config: SemiOnsConfig) -> Result<Self> {
        config.validate()?;
        Ok(SemiOnsState {
            z: Vector::zeros(dim),
            lambda_mat: SpdMatrix::scaled_identity(dim, config.lambda)?,
            config,
            t: 0,
            history: VecDeque::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// Iterate to play at the next step.
    pub fn z(&self) -> &Vector {
        &self.z
    }

    pub fn preconditioner(&self) -> &SpdMatrix {
        &self.lambda_mat
    }

    pub fn config(&self) -> &SemiOnsConfig {
        &self.config
    }

    /// Number of processed steps.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Context history, newest first.
    pub fn history(&self) -> impl Iterator<Item = &Matrix> {
        self.history.iter()
    }

    /// Adds a context `Y_s` from a step taken before the optimizer started, so
    /// the first `H_t` sees the full memory window.
    pub fn push_context(&mut self, y: Matrix, h_len: usize) -> Result<()> {
        if y.ncols() != self.dim() {
            return Err(Error::dim("SemiOnsState::push_context", self.dim(), y.ncols()));
        }
        self.history.push_front(y);
        self.history.truncate(h_len + 1);
        Ok(())
    }

    /// One update with kernel `g_used` (the true `G` in the exact setting, an
    /// estimate `Ĝ` in the approximate one). The gradient uses
    /// [`AffineContext::learner_offset`].
    pub fn step(&mut self, loss: &QuadLoss, ctx: &AffineContext, g_used: &MarkovOperator) -> Result<SemiOnsStep> {
        let d = self.dim();
        if ctx.y.ncols() != d || ctx.y.nrows() != g_used.in_dim() {
            return Err(Error::dim(
                "SemiOnsState::step",
                format!("{}x{}", g_used.in_dim(), d),
                format!("{}x{}", ctx.y.nrows(), ctx.y.ncols()),
            ));
        }
        self.history.push_front(ctx.y.clone());
        self.history.truncate(g_used.h_len() + 1);

        let h = make_h(g_used, self.history.iter(), d)?;
        self.lambda_mat.add_gram(&h)?;
        let grad = unary_grad(loss, ctx.learner_offset(), &h, &self.z)?;
        let direction = spd_solve(&self.lambda_mat, &grad)?;
        let z_tilde = &self.z - direction * self.config.eta;
        let z_next = proj_weighted_ball(&self.lambda_mat, &z_tilde, self.config.radius)?;
        let z_played = std::mem::replace(&mut self.z, z_next.clone());
        self.t += 1;
        Ok(SemiOnsStep { h, grad, z_played, z_next })
    }
}
