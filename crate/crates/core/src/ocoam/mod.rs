//! Online convex optimization with affine memory.

pub mod diagnostics;
pub mod hindsight;
pub mod ledger;
pub mod loss;
pub mod markov;
pub mod semions;

pub use diagnostics::{c_psi, covariance_check, covariance_domination_gap, CovarianceCheck};
pub use hindsight::{best_in_hindsight, HindsightAccumulator};
pub use ledger::{ledger_finalize, RegretLedger, RegretSummary, StepRecord};
pub use loss::QuadLoss;
pub use markov::{MarkovOperator, DEFAULT_KAPPA_GRID};
pub use semions::{make_h, memory_eval, unary_eval, unary_grad, AffineContext, SemiOnsConfig, SemiOnsState, SemiOnsStep};
