//! Monte Carlo value functions and optimal feedback for linear-quadratic
//! stochastic control problems with a state constraint.
//!
//! The value function is recovered as `v = −2 ln u`, where `u` is the
//! expectation of `exp(−½∫f − ½g)` over uncontrolled paths that avoid the
//! forbidden set `D` until the horizon. The optimal feedback is
//! `α* = σᵀ∇u/u` on the allowed set and zero elsewhere.

// `!(a < b)` is used on purpose so NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod oracles;
mod parallel;
pub mod policy;
pub mod verify;

pub use dynamics::{
    simulate_controlled, simulate_uncontrolled, CoefficientField, ConstantField, FnField, NoiseStream, PathSample,
    TimeGrid,
};
pub use error::{Error, Result};
pub use estimator::{estimate_grad_u, estimate_u, estimate_u_grid, CostFn, CostSpec, Estimate, McConfig, ProblemSpec};
pub use geometry::{ConstraintKind, ConstraintSet, HalfSpace, KillMechanism, KillReport, Side, TerminalClass};
pub use oracles::ClosedFormSolution;
pub use policy::{alpha_star_closed_form, clamp, value_from_u, FeedbackPolicy, PolicySource, UFunction, ValueFunction};
