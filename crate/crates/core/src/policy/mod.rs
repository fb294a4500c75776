//! The value function `v = −2 ln u` and the optimal feedback
//! `α* = σᵀ∇u/u`, from a closed-form `u` or from Monte Carlo estimates.

mod lattice;

pub use lattice::{alpha_star_mc, McControl, McPolicy, McPolicyConfig, TabulatedU};

use std::fmt;
use std::sync::Arc;

use crate::dynamics::{mat_t_vec, CoefficientField};
use crate::error::{Error, Result};
use crate::geometry::TIME_TOL;

/// Default cap on `|α|` used when simulating the optimally controlled state.
pub const DEFAULT_CLAMP_MAX: f64 = 1e4;

/// Below this `û` the Monte Carlo policy returns zero and flags the point.
pub const DEFAULT_U_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicySource {
    ClosedForm,
    MonteCarloFD,
    Zero,
    UserSupplied,
}

impl fmt::Display for PolicySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::ClosedForm => "closed_form",
            Self::MonteCarloFD => "monte_carlo_fd",
            Self::Zero => "zero",
            Self::UserSupplied => "user_supplied",
        };
        f.write_str(s)
    }
}

type ControlFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// A feedback map `(t, x) ↦ a ∈ ℝ^{d′}`, optionally capped in Euclidean norm.
#[derive(Clone)]
pub struct FeedbackPolicy {
    control: Arc<ControlFn>,
    dim_control: usize,
    clamp_max: Option<f64>,
    source: PolicySource,
}

impl fmt::Debug for FeedbackPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeedbackPolicy")
            .field("dim_control", &self.dim_control)
            .field("clamp_max", &self.clamp_max)
            .field("source", &self.source)
            .finish_non_exhaustive()
    }
}

impl FeedbackPolicy {
    pub fn from_fn<F>(dim_control: usize, source: PolicySource, control: F) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            control: Arc::new(control),
            dim_control,
            clamp_max: None,
            source,
        }
    }

    pub fn zero(dim_control: usize) -> Self {
        Self::from_fn(dim_control, PolicySource::Zero, |_, _, out| out.fill(0.0))
    }

    pub fn dim_control(&self) -> usize {
        self.dim_control
    }

    pub fn clamp_max(&self) -> Option<f64> {
        self.clamp_max
    }

    pub fn source(&self) -> PolicySource {
        self.source
    }

    /// Write the control at `(t, x)` into `out`; returns whether the clamp
    /// was active.
    pub fn evaluate_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> bool {
        (self.control)(t, x, out);
        let Some(cap) = self.clamp_max else {
            return false;
        };
        let norm = out.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > cap {
            let scale = cap / norm;
            out.iter_mut().for_each(|a| *a *= scale);
            true
        } else if norm.is_nan() {
            // an unbounded control with no direction: treat as zero
            out.fill(0.0);
            true
        } else {
            false
        }
    }

    pub fn evaluate(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_control];
        self.evaluate_into(t, x, &mut out);
        out
    }
}

/// Cap the norm of `policy`'s control at `clamp_max`, preserving direction.
/// `+∞` leaves the policy unchanged. An existing tighter cap is kept.
///
/// # Panics
/// If `clamp_max` is not positive.
pub fn clamp(policy: &FeedbackPolicy, clamp_max: f64) -> FeedbackPolicy {
    assert!(clamp_max > 0.0, "clamp_max must be positive, got {clamp_max}");
    let mut p = policy.clone();
    if clamp_max.is_finite() {
        p.clamp_max = Some(p.clamp_max.map_or(clamp_max, |c| c.min(clamp_max)));
    }
    p
}

/// `−2 ln u`, with `+∞` at `u = 0`.
pub fn value_from_u(u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::OutOfRange(u));
    }
    Ok(if u == 0.0 { f64::INFINITY } else { -2.0 * u.ln() })
}

/// A function `u` on `[0,T]×ℝᵈ` with a spatial gradient.
pub trait UFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn horizon(&self) -> f64;
    fn u(&self, t: f64, x: &[f64]) -> f64;
    fn grad_u(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// `∇ ln u` into `out`; returns false (leaving `out` unspecified) where
    /// `u = 0`. Override when the ratio can be formed more stably.
    fn grad_log_u(&self, t: f64, x: &[f64], out: &mut [f64]) -> bool {
        let u = self.u(t, x);
        if !(u > 0.0) {
            return false;
        }
        self.grad_u(t, x, out);
        out.iter_mut().for_each(|g| *g /= u);
        true
    }

    /// `ln u`, `−∞` where `u = 0`.
    fn log_u(&self, t: f64, x: &[f64]) -> f64 {
        self.u(t, x).ln()
    }
}

type ScalarFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// `v(t,x)` with `+∞` on `D`.
#[derive(Clone)]
pub struct ValueFunction {
    evaluate: ScalarFn,
    source: PolicySource,
}

impl fmt::Debug for ValueFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ValueFunction").field("source", &self.source).finish_non_exhaustive()
    }
}

impl ValueFunction {
    pub fn from_fn<F>(source: PolicySource, evaluate: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            evaluate: Arc::new(evaluate),
            source,
        }
    }

    /// `−2 ln u` of a [`UFunction`].
    pub fn from_u(u: Arc<dyn UFunction>, source: PolicySource) -> Self {
        Self::from_fn(source, move |t, x| -2.0 * u.log_u(t, x))
    }

    pub fn evaluate(&self, t: f64, x: &[f64]) -> f64 {
        (self.evaluate)(t, x)
    }

    pub fn source(&self) -> PolicySource {
        self.source
    }
}

/// `α*(t,x) = σᵀ(t,x)∇u(t,x)/u(t,x)` for `t < T` and `u > 0`, zero
/// elsewhere.
pub fn alpha_star_closed_form(u: Arc<dyn UFunction>, field: Arc<dyn CoefficientField>) -> FeedbackPolicy {
    let (d, dn) = (field.dim_state(), field.dim_noise());
    let horizon = u.horizon();
    FeedbackPolicy::from_fn(dn, PolicySource::ClosedForm, move |t, x, out| {
        out.fill(0.0);
        if t >= horizon - TIME_TOL {
            return;
        }
        let mut grad = vec![0.0; d];
        if !u.grad_log_u(t, x, &mut grad) {
            return;
        }
        let mut sigma = vec![0.0; d * dn];
        field.dispersion(t, x, &mut sigma);
        mat_t_vec(&sigma, &grad, out);
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ConstantField;

    struct Linear;

    impl UFunction for Linear {
        fn dim(&self) -> usize {
            2
        }
        fn horizon(&self) -> f64 {
            1.0
        }
        fn u(&self, _t: f64, x: &[f64]) -> f64 {
            (0.5 + 0.1 * x[0] + 0.2 * x[1]).clamp(0.0, 1.0)
        }
        fn grad_u(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
            out.copy_from_slice(&[0.1, 0.2]);
        }
    }

    #[test]
    fn value_from_u_examples() {
        assert_eq!(value_from_u(1.0).unwrap(), 0.0);
        assert_eq!(value_from_u(0.0).unwrap(), f64::INFINITY);
        assert!((value_from_u(0.5).unwrap() - 1.386294).abs() < 1e-6);
        assert_eq!(value_from_u(1.5), Err(Error::OutOfRange(1.5)));
        assert!(value_from_u(f64::NAN).is_err());
    }

    #[test]
    fn clamp_examples() {
        let p = FeedbackPolicy::from_fn(2, PolicySource::UserSupplied, |_, _, o| o.copy_from_slice(&[3.0, 4.0]));
        assert_eq!(clamp(&p, 5.0).evaluate(0.0, &[0.0]), vec![3.0, 4.0]);
        assert_eq!(clamp(&p, 2.5).evaluate(0.0, &[0.0]), vec![1.5, 2.0]);
        assert_eq!(clamp(&p, f64::INFINITY).clamp_max(), None);
        assert_eq!(clamp(&clamp(&p, 1.0), 3.0).clamp_max(), Some(1.0));
        let mut out = [0.0; 2];
        assert!(clamp(&p, 2.5).evaluate_into(0.0, &[0.0], &mut out));
        assert!(!clamp(&p, 5.0).evaluate_into(0.0, &[0.0], &mut out));
    }

    #[test]
    fn closed_form_uses_transpose() {
        // σ = [[1, 0], [2, 3]]: σᵀ∇u = (0.1 + 0.4, 0.6)
        let field = Arc::new(ConstantField::new(vec![0.0, 0.0], vec![1.0, 0.0, 2.0, 3.0], 2));
        let p = alpha_star_closed_form(Arc::new(Linear), field);
        let a = p.evaluate(0.2, &[0.0, 0.0]);
        assert!((a[0] - 1.0).abs() < 1e-15 && (a[1] - 1.2).abs() < 1e-15);
        assert_eq!(p.evaluate(1.0, &[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(p.evaluate(0.2, &[-10.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn value_function_from_u() {
        let v = ValueFunction::from_u(Arc::new(Linear), PolicySource::ClosedForm);
        assert!((v.evaluate(0.0, &[0.0, 0.0]) - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(v.evaluate(0.0, &[-10.0, 0.0]), f64::INFINITY);
    }
}
