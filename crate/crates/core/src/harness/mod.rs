//! Experiment orchestration: scenarios, seeded cells, output files, slope
//! fits and the acceptance suite.

pub mod acceptance;
pub mod diag;
pub mod runner;
pub mod scenario;
pub mod stats;

pub use runner::{
    cells, ledger_identity_gap, read_csv, run_scenario, run_scenario_with_jobs, write_csv, write_outputs, Cell, CellTiming,
    LedgerAudit, OutputFormat, ResultRow, RunManifest, RunOutput, Status, CSV_HEADER,
};
pub use scenario::{ExperimentKind, Scenario};
pub use stats::{mean, median, quantile, slope_fit, SlopeFit};
