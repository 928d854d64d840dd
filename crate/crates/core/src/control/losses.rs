//! Loss streams over stacked `(y, u)` vectors.

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng, Vector};
use crate::ocoam::QuadLoss;

/// Losses revealed one per step; step `t` (1-based) uses entry `(t − 1) mod n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSchedule {
    losses: Vec<QuadLoss>,
}

impl LossSchedule {
    pub fn new(losses: Vec<QuadLoss>) -> Result<Self> {
        let first = losses.first().ok_or_else(|| Error::InvalidInput("loss schedule is empty".into()))?;
        let p = first.dim();
        if losses.iter().any(|l| l.dim() != p) {
            return Err(Error::InvalidInput("losses in a schedule must share one dimension".into()));
        }
        Ok(LossSchedule { losses })
    }

    pub fn constant(loss: QuadLoss) -> Self {
        LossSchedule { losses: vec![loss] }
    }

    /// `q_y‖y‖² + r_u‖u‖²`.
    pub fn lqr(dy: usize, du: usize, q_y: f64, r_u: f64) -> Result<Self> {
        let mut q = Matrix::zeros(dy + du, dy + du);
        for i in 0..dy {
            q[(i, i)] = q_y;
        }
        for i in dy..dy + du {
            q[(i, i)] = r_u;
        }
        Ok(Self::constant(QuadLoss::new(q, Vector::zeros(dy + du))?))
    }

    /// `period` losses with the LQR weights and output targets drawn uniformly
    /// from the ball of radius `target_radius`.
    pub fn tracking(dy: usize, du: usize, q_y: f64, r_u: f64, target_radius: f64, period: usize, rng: &mut Rng) -> Result<Self> {
        let base = Self::lqr(dy, du, q_y, r_u)?;
        let q = base.losses[0].q().clone();
        let mut losses = Vec::with_capacity(period.max(1));
        for _ in 0..period.max(1) {
            let dir = rng.sphere_vector(dy, 1.0) * (target_radius * rng.uniform().sqrt());
            let mut g = Vector::zeros(dy + du);
            g.rows_mut(0, dy).copy_from(&dir);
            losses.push(QuadLoss::new(q.clone(), g)?);
        }
        Self::new(losses)
    }

    pub fn at(&self, t: usize) -> &QuadLoss {
        &self.losses[(t.max(1) - 1) % self.losses.len()]
    }

    pub fn dim(&self) -> usize {
        self.losses[0].dim()
    }

    pub fn losses(&self) -> &[QuadLoss] {
        &self.losses
    }

    /// Smallest curvature over the schedule.
    pub fn alpha(&self) -> f64 {
        self.losses.iter().map(QuadLoss::curvature).fold(f64::INFINITY, f64::min)
    }

    /// Largest smoothness over the schedule.
    pub fn smoothness(&self) -> f64 {
        self.losses.iter().map(QuadLoss::smoothness).fold(0.0, f64::max)
    }
}
