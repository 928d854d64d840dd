//! Online non-stochastic control of linear dynamical systems.
//!
//! The crate is layered bottom-up:
//!
//! * [`numcore`]: dense kernels (SPD solves, weighted-ball projection,
//!   operator norms, spectral estimates) and a seeded RNG.
//! * [`ocoam`]: online convex optimization with affine memory: quadratic
//!   losses, Markov operators, the Semi-ONS optimizer, regret ledgers and the
//!   exact best-in-hindsight comparator.
//! * [`control`]: LTI simulation, nominal-sequence recovery, the DRC
//!   controller parametrization and the DRC-ONS closed loop.
//! * [`estimation`]: Gaussian exploration and least-squares identification
//!   of the nominal Markov operator.
//! * [`tradeoff`]: the epoch adversary, standard ONS and OGD baselines for
//!   the regret/movement tradeoff.
//! * [`harness`]: scenarios, seeded experiment cells, CSV/JSON output,
//!   log-log slope fitting and the acceptance suite.

pub mod error;
pub mod numcore;
pub mod ocoam;
pub mod control;
pub mod estimation;
pub mod tradeoff;
pub mod harness;

pub use error::{Error, Result};
pub use numcore::{Matrix, Rng, SpdMatrix, Vector};
