//! Linear systems, disturbances, DRC policies, benchmark controllers and the
//! DRC-ONS closed loop.

pub mod disturbance;
pub mod drc;
pub mod ldc;
pub mod losses;
pub mod run;
pub mod system;

pub use disturbance::{DisturbanceGen, DisturbanceKind, Disturbances};
pub use drc::{drc_input, embed, embed_inv, embed_y, recover_nat, stack, DrcPolicy};
pub use ldc::{
    control_regret, divergence_limit, drc_comparator_for_static, drc_from_conversion, drc_rollout, ldc_rollout, ldc_trace,
    static_conversion, LdcPolicy,
};
pub use losses::LossSchedule;
pub use run::{drc_ons_run, drc_ons_unknown_run, run_loop, DrcOnsParams, Knowledge, RunReport, Trajectory};
pub use system::{simulate_step, spectral_radius, stabilizing_gain, LinearSystem};
