//! Linear-algebra kernels and seeded sampling shared by every other module.

pub mod linalg;
pub mod rng;

pub use linalg::{
    cholesky, eig_min_sym, op_norm, proj_weighted_ball, spd_solve, spectral_radius_estimate, Matrix,
    SpdMatrix, SpectralEstimate, Vector,
};
pub use rng::Rng;
