//! Checks of the identities the exact solution must satisfy.

mod cost;
mod htransform;
mod ks;
mod reflection;
mod residual;
mod theta;

pub use cost::{cost_of_policy, CostReport};
pub use htransform::{calibrate_threshold, htransform_law_check, LawCheckConfig, LawReport};
pub use ks::{ks_distance, weighted_ks_distance};
pub use reflection::{
    discrete_monitoring_shift, discrete_survival_probability, reflection_bruteforce_u, DISCRETE_MONITORING_SHIFT,
};
pub use residual::{hjb_residual, pde_residual_u, ResidualReport, ResidualTerms};
pub use theta::{theta_martingale_check, ThetaCheckpoint, ThetaReport};
