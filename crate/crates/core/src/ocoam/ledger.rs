//! Per-step regret bookkeeping on the exact losses.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::hindsight::HindsightAccumulator;
use super::loss::QuadLoss;
use super::markov::MarkovOperator;
use super::semions::make_h;
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// `F_t(z_{t:t−h})`
    pub memory_loss: f64,
    /// `f_t(z_t)`
    pub unary_loss: f64,
    /// `‖z_t − z_{t−1}‖`
    pub euc_move: f64,
    /// `Σ_{i=1}^h ‖Y_t(z_{t−i} − z_{t−i−1})‖`
    pub adap_move: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub steps: usize,
    pub memory_reg: f64,
    pub oco_reg: f64,
    pub move_diff: f64,
    pub euc_cost: f64,
    pub adap_cost: f64,
    pub comparator_value: f64,
    pub total_memory_loss: f64,
    pub total_unary_loss: f64,
}

impl RegretSummary {
    /// `OcoReg + µ·EucCost`.
    pub fn regmu(&self, mu: f64) -> f64 {
        self.oco_reg + mu * self.euc_cost
    }
}

/// Records `F_t`, `f_t` and movement under a fixed kernel `G`, and accumulates
/// the hindsight quadratic so the comparator can be solved at the end.
///
/// Iterates before the first recorded step are taken to be zero.
#[derive(Debug, Clone)]
pub struct RegretLedger {
    g: MarkovOperator,
    ys: VecDeque<Matrix>,
    zs: VecDeque<Vector>,
    records: Vec<StepRecord>,
    hindsight: HindsightAccumulator,
    sum_memory: f64,
    sum_unary: f64,
    sum_euc: f64,
    sum_adap: f64,
}

impl RegretLedger {
    pub fn new(g: MarkovOperator, d: usize) -> Self {
        RegretLedger {
            g,
            ys: VecDeque::new(),
            zs: VecDeque::new(),
            records: Vec::new(),
            hindsight: HindsightAccumulator::new(d),
            sum_memory: 0.0,
            sum_unary: 0.0,
            sum_euc: 0.0,
            sum_adap: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.hindsight.dim()
    }

    pub fn kernel(&self) -> &MarkovOperator {
        &self.g
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn hindsight(&self) -> &HindsightAccumulator {
        &self.hindsight
    }

    /// Adds `Y_t` for a step played with `z_t = 0` that is not itself recorded.
    pub fn push_context(&mut self, y: &Matrix) -> Result<()> {
        if y.ncols() != self.dim() {
            return Err(Error::dim("RegretLedger::push_context", self.dim(), y.ncols()));
        }
        self.ys.push_front(y.clone());
        self.ys.truncate(self.g.h_len() + 1);
        self.zs.push_front(Vector::zeros(self.dim()));
        self.zs.truncate(self.g.h_len() + 2);
        Ok(())
    }

    /// Records step `t` with context `Y_t`, offset `v_t` and played iterate `z_t`.
    pub fn record(&mut self, loss: &QuadLoss, y: &Matrix, v: &Vector, z: &Vector) -> Result<StepRecord> {
        let d = self.dim();
        if z.len() != d {
            return Err(Error::dim("RegretLedger::record", d, z.len()));
        }
        let h_len = self.g.h_len();
        self.ys.push_front(y.clone());
        self.ys.truncate(h_len + 1);
        self.zs.push_front(z.clone());
        self.zs.truncate(h_len + 2);

        let h = make_h(&self.g, self.ys.iter(), d)?;
        let unary_loss = loss.eval(&(v + &h * z));
        let mut point = v.clone();
        for ((block, yi), zi) in self.g.blocks().iter().zip(&self.ys).zip(&self.zs) {
            point += block * (yi * zi);
        }
        let memory_loss = loss.eval(&point);

        let zero = Vector::zeros(d);
        let z_at = |i: usize| self.zs.get(i).unwrap_or(&zero);
        let euc_move = (z_at(0) - z_at(1)).norm();
        let mut adap_move = 0.0;
        for i in 1..=h_len {
            adap_move += (y * (z_at(i) - z_at(i + 1))).norm();
        }

        self.hindsight.add(loss, v, &h)?;
        let rec = StepRecord { memory_loss, unary_loss, euc_move, adap_move };
        self.sum_memory += memory_loss;
        self.sum_unary += unary_loss;
        self.sum_euc += euc_move;
        self.sum_adap += adap_move;
        self.records.push(rec);
        Ok(rec)
    }

    /// Exact comparator `min_{‖z‖ ≤ radius} Σ f_t(z)` over the recorded steps.
    pub fn comparator(&self, radius: f64) -> Result<(Vector, f64)> {
        self.hindsight.solve(radius)
    }

    /// Summary against a supplied comparator value.
    pub fn finalize(&self, comparator_value: f64) -> RegretSummary {
        let move_diff = self.records.iter().map(|r| r.memory_loss - r.unary_loss).sum();
        RegretSummary {
            steps: self.records.len(),
            memory_reg: self.sum_memory - comparator_value,
            oco_reg: self.sum_unary - comparator_value,
            move_diff,
            euc_cost: self.sum_euc,
            adap_cost: self.sum_adap,
            comparator_value,
            total_memory_loss: self.sum_memory,
            total_unary_loss: self.sum_unary,
        }
    }
}

/// [`RegretLedger::finalize`] as a free function.
pub fn ledger_finalize(ledger: &RegretLedger, comparator_value: f64) -> RegretSummary {
    ledger.finalize(comparator_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;
    use crate::ocoam::semions::{AffineContext, SemiOnsConfig, SemiOnsState};

    fn m1(x: f64) -> Matrix {
        Matrix::from_element(1, 1, x)
    }

    fn v1(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    #[test]
    fn constant_iterates_have_no_movement() {
        let mut rng = Rng::new(1);
        let g = MarkovOperator::new((0..3).map(|_| rng.gaussian_matrix(2, 1)).collect()).unwrap();
        let mut ledger = RegretLedger::new(g, 3);
        let z = rng.gaussian_vector(3);
        // The first step moves from the zero initialization; start measuring after h+1 steps.
        for _ in 0..10 {
            ledger.record(&QuadLoss::squared_norm(2), &rng.gaussian_matrix(1, 3), &rng.gaussian_vector(2), &z).unwrap();
        }
        for rec in &ledger.records()[3..] {
            assert_eq!(rec.euc_move, 0.0);
            assert_eq!(rec.adap_move, 0.0);
            assert!((rec.memory_loss - rec.unary_loss).abs() < 1e-12 * rec.unary_loss.max(1.0));
        }
    }

    #[test]
    fn zero_iterates_match_everywhere() {
        let mut rng = Rng::new(2);
        let g = MarkovOperator::new((0..2).map(|_| rng.gaussian_matrix(2, 1)).collect()).unwrap();
        let mut ledger = RegretLedger::new(g, 2);
        for _ in 0..5 {
            ledger.record(&QuadLoss::squared_norm(2), &rng.gaussian_matrix(1, 2), &rng.gaussian_vector(2), &Vector::zeros(2)).unwrap();
        }
        let s = ledger.finalize(0.0);
        assert_eq!(s.euc_cost, 0.0);
        assert_eq!(s.adap_cost, 0.0);
        assert_eq!(s.memory_reg, s.oco_reg);
        assert_eq!(s.move_diff, 0.0);
    }

    #[test]
    fn single_step_unary_specialization() {
        let g = MarkovOperator::scalar(&[0.0]).unwrap();
        let mut ledger = RegretLedger::new(g, 1);
        ledger.record(&QuadLoss::squared_norm(1), &m1(1.0), &v1(0.3), &v1(0.0)).unwrap();
        assert_eq!(ledger.finalize(0.0).move_diff, 0.0);
    }

    #[test]
    fn three_step_scalar_hand_sum() {
        // G = (1, 0.5), Q = 1, g = 0, Y = (1, 2, −1), v = (0.5, 0, 1), z = (0.2, −0.1, 0.4).
        let g = MarkovOperator::scalar(&[1.0, 0.5]).unwrap();
        let mut ledger = RegretLedger::new(g, 1);
        let ys = [1.0, 2.0, -1.0];
        let vs = [0.5, 0.0, 1.0];
        let zs = [0.2, -0.1, 0.4];
        let loss = QuadLoss::squared_norm(1);
        for k in 0..3 {
            ledger.record(&loss, &m1(ys[k]), &v1(vs[k]), &v1(zs[k])).unwrap();
        }
        // F1 = (0.5 + 0.2)² = 0.49
        // F2 = (0 + 2·(−0.1) + 0.5·1·0.2)² = (−0.1)² = 0.01
        // F3 = (1 − 0.4 + 0.5·2·(−0.1))² = 0.5² = 0.25
        // f1 = 0.49; H2 = 2 + 0.5 = 2.5, f2 = (−0.25)² = 0.0625; H3 = −1 + 1 = 0, f3 = 1
        // Euc = 0.2 + 0.3 + 0.5 = 1.0
        // Adap (h = 1): t=1 |1·(0 − 0)| = 0; t=2 |2·(0.2 − 0)| = 0.4; t=3 |−1·(−0.1 − 0.2)| = 0.3
        let comparator = 0.1;
        let s = ledger.finalize(comparator);
        let sum_f = 0.49 + 0.01 + 0.25;
        let sum_unary = 0.49 + 0.0625 + 1.0;
        assert!((s.memory_reg - (sum_f - comparator)).abs() < 1e-12);
        assert!((s.oco_reg - (sum_unary - comparator)).abs() < 1e-12);
        assert!((s.move_diff - (sum_f - sum_unary)).abs() < 1e-12);
        assert!((s.euc_cost - 1.0).abs() < 1e-12);
        assert!((s.adap_cost - 0.7).abs() < 1e-12);
        assert!((s.regmu(2.0) - (s.oco_reg + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn identity_holds_on_semi_ons_run() {
        let mut rng = Rng::new(44);
        let d = 3;
        let g = MarkovOperator::new((0..4).map(|i| rng.gaussian_matrix(2, 1) * 0.5_f64.powi(i)).collect()).unwrap();
        let cfg = SemiOnsConfig { eta: 1.0, lambda: 1.0, radius: 2.0 };
        let mut st = SemiOnsState::new(d, cfg).unwrap();
        let mut ledger = RegretLedger::new(g.clone(), d);
        let loss = QuadLoss::squared_norm(2);
        for _ in 0..300 {
            let ctx = AffineContext::exact(rng.gaussian_matrix(1, d), rng.gaussian_vector(2));
            ledger.record(&loss, &ctx.y, &ctx.v, st.z()).unwrap();
            st.step(&loss, &ctx, &g).unwrap();
        }
        let (_, value) = ledger.comparator(2.0).unwrap();
        let s = ledger.finalize(value);
        assert!((s.memory_reg - s.oco_reg - s.move_diff).abs() < 1e-9);
        assert!(s.oco_reg >= -1e-9);
    }
}
