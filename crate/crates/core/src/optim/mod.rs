//! Numerical building blocks: special functions and the swarm minimizer.

mod pso;
pub mod special;

pub use pso::{pso_minimize, GammaFitConfig, PsoOutcome, STALL_ITERS};
pub use special::{
    gamma_cdf, gamma_pdf, gamma_quantile, normal_cdf, normal_quantile, t_cdf, t_quantile,
};
