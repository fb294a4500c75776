//! Closed-form `u`, `v` and `α*` for one-dimensional Brownian problems with
//! `μ ≡ f ≡ g ≡ 0`, and for the unconstrained problem with constant costs.
//!
//! * `example1`: `D = {T}×(−∞,0]`, `u = Φ(x/√(T−t))`.
//! * `example2`: `D = [0,T]×(−∞,0]`, `u = 2Φ(x/√(T−t)) − 1`.
//! * `example3`: `D = {t₀}×[x₀,x₁]`,
//!   `u = Φ((x−x₁)/√(t₀−t)) + Φ((x₀−x)/√(t₀−t))` before `t₀`.

mod normal;

pub use normal::{
    inverse_mills_ratio, std_normal_cdf, std_normal_central, std_normal_log_cdf, std_normal_log_pdf, std_normal_pdf,
};

use std::sync::Arc;

use crate::dynamics::{CoefficientField, ConstantField};
use crate::error::{Error, Result};
use crate::estimator::{CostFn, CostSpec, ProblemSpec};
use crate::geometry::{ConstraintKind, ConstraintSet, HalfSpace, Side, TIME_TOL};
use crate::policy::{alpha_star_closed_form, FeedbackPolicy, PolicySource, UFunction, ValueFunction};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Example1,
    Example2,
    Example3 { t0: f64, x0: f64, x1: f64 },
    Unconstrained { running: f64, terminal: f64 },
}

/// Exact solution of one of the built-in problems.
#[derive(Clone)]
pub struct ClosedFormSolution {
    kind: Kind,
    horizon: f64,
    field: Arc<dyn CoefficientField>,
}

impl std::fmt::Debug for ClosedFormSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosedFormSolution")
            .field("kind", &self.kind)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon > 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")))
    }
}

/// Result of [`unconstrained_case`].
#[derive(Debug, Clone)]
pub enum UnconstrainedCase {
    Closed(ClosedFormSolution),
    /// Non-constant costs: use the estimator.
    DeferToEstimator,
}

/// Closed form for `D = ∅` with constant `f` and `g`:
/// `u = exp(−½f·(T−t) − ½g)` and `α* ≡ 0` whatever `μ` and `σ` are.
pub fn unconstrained_case(problem: &ProblemSpec) -> Result<UnconstrainedCase> {
    if !problem.constraint().is_empty_set() {
        return Err(Error::InvalidGeometry("unconstrained case needs an empty forbidden set".into()));
    }
    let constant = |c: &CostFn| match c {
        CostFn::Zero => Some(0.0),
        CostFn::Constant(v) => Some(*v),
        CostFn::Custom(_) => None,
    };
    let costs = problem.costs();
    Ok(match (constant(&costs.running), constant(&costs.terminal)) {
        (Some(running), Some(terminal)) => UnconstrainedCase::Closed(ClosedFormSolution {
            kind: Kind::Unconstrained { running, terminal },
            horizon: problem.horizon(),
            field: problem.field_arc(),
        }),
        _ => UnconstrainedCase::DeferToEstimator,
    })
}

impl ClosedFormSolution {
    pub fn example1(horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        Ok(Self::brownian(Kind::Example1, horizon))
    }

    pub fn example2(horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        Ok(Self::brownian(Kind::Example2, horizon))
    }

    pub fn example3(horizon: f64, t0: f64, x0: f64, x1: f64) -> Result<Self> {
        check_horizon(horizon)?;
        if !(x0 < x1) {
            return Err(Error::InvalidGeometry(format!("need x0 < x1, got [{x0}, {x1}]")));
        }
        if !(t0 > 0.0 && t0 < horizon) {
            return Err(Error::InvalidGeometry(format!("need 0 < t0 < T, got t0 = {t0}, T = {horizon}")));
        }
        Ok(Self::brownian(Kind::Example3 { t0, x0, x1 }, horizon))
    }

    /// `D = ∅`, `f ≡ running`, `g ≡ terminal`, with the given coefficients.
    pub fn unconstrained(field: Arc<dyn CoefficientField>, horizon: f64, running: f64, terminal: f64) -> Result<Self> {
        check_horizon(horizon)?;
        if !(running >= 0.0 && terminal >= 0.0) {
            return Err(Error::InvalidArgument("costs must be non-negative".into()));
        }
        Ok(Self {
            kind: Kind::Unconstrained { running, terminal },
            horizon,
            field,
        })
    }

    fn brownian(kind: Kind, horizon: f64) -> Self {
        Self {
            kind,
            horizon,
            field: Arc::new(ConstantField::brownian(1)),
        }
    }

    /// Registered name: `example1`, `example2`, `example3` or `unconstrained`.
    pub fn name(&self) -> &'static str {
        match self.kind {
            Kind::Example1 => "example1",
            Kind::Example2 => "example2",
            Kind::Example3 { .. } => "example3",
            Kind::Unconstrained { .. } => "unconstrained",
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn field(&self) -> Arc<dyn CoefficientField> {
        self.field.clone()
    }

    pub fn constraint(&self) -> ConstraintSet {
        let t = self.horizon;
        let barrier = HalfSpace::new(0, 0.0, Side::Below);
        let kind = match self.kind {
            Kind::Example1 => ConstraintKind::TerminalHalfSpace(barrier),
            Kind::Example2 => ConstraintKind::RunningHalfSpace(barrier),
            Kind::Example3 { t0, x0, x1 } => ConstraintKind::TimeSlab {
                t0,
                lower: vec![x0],
                upper: vec![x1],
            },
            Kind::Unconstrained { .. } => ConstraintKind::Empty,
        };
        ConstraintSet::new(kind, self.field.dim_state(), t).expect("built-in geometry is valid")
    }

    pub fn costs(&self) -> CostSpec {
        match self.kind {
            Kind::Unconstrained { running, terminal } => CostSpec {
                running: CostFn::Constant(running),
                terminal: CostFn::Constant(terminal),
            },
            _ => CostSpec::zero(),
        }
    }

    pub fn problem(&self) -> ProblemSpec {
        ProblemSpec::new(self.field.clone(), self.constraint(), self.costs(), self.horizon)
            .expect("built-in problem is consistent")
    }

    /// `v = −2 ln u`, `+∞` where `u = 0`.
    pub fn v(&self, t: f64, x: &[f64]) -> f64 {
        -2.0 * self.log_u(t, x)
    }

    /// `α*` as printed for each example (zero for the unconstrained case),
    /// evaluated naively from `φ` and `Φ`; zero outside the region where the
    /// formula is stated.
    pub fn alpha_star_printed(&self, t: f64, x: &[f64]) -> f64 {
        let (phi, cdf) = (std_normal_pdf, std_normal_cdf);
        let x = x[0];
        match self.kind {
            Kind::Example1 if t < self.horizon => {
                let s = (self.horizon - t).sqrt();
                phi(x / s) / cdf(x / s) / s
            }
            Kind::Example2 if t < self.horizon && x > 0.0 => {
                let s = (self.horizon - t).sqrt();
                2.0 / s * phi(x / s) / (2.0 * cdf(x / s) - 1.0)
            }
            Kind::Example3 { t0, x0, x1 } if t < t0 => {
                let s = (t0 - t).sqrt();
                let (a, b) = ((x - x1) / s, (x0 - x) / s);
                (phi(a) - phi(b)) / (cdf(a) + cdf(b)) / s
            }
            _ => 0.0,
        }
    }

    /// The optimal feedback `σᵀ∇u/u`, unclamped.
    pub fn policy(&self) -> FeedbackPolicy {
        alpha_star_closed_form(Arc::new(self.clone()), self.field.clone())
    }

    pub fn value_function(&self) -> ValueFunction {
        ValueFunction::from_u(Arc::new(self.clone()), PolicySource::ClosedForm)
    }

    fn at_or_after_horizon(&self, t: f64) -> bool {
        t >= self.horizon - TIME_TOL
    }
}

impl UFunction for ClosedFormSolution {
    fn dim(&self) -> usize {
        self.field.dim_state()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn u(&self, t: f64, x: &[f64]) -> f64 {
        self.log_u(t, x).exp()
    }

    fn log_u(&self, t: f64, x: &[f64]) -> f64 {
        let indicator = |keep: bool| if keep { 0.0 } else { f64::NEG_INFINITY };
        match self.kind {
            Kind::Unconstrained { running, terminal } => {
                -0.5 * running * (self.horizon - t).max(0.0) - 0.5 * terminal
            }
            Kind::Example1 | Kind::Example2 if self.at_or_after_horizon(t) => indicator(x[0] > 0.0),
            Kind::Example1 => std_normal_log_cdf(x[0] / (self.horizon - t).sqrt()),
            Kind::Example2 => {
                if x[0] <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    std_normal_central(x[0] / (self.horizon - t).sqrt()).ln()
                }
            }
            Kind::Example3 { t0, x0, x1 } => {
                if t > t0 + TIME_TOL {
                    0.0
                } else if t >= t0 - TIME_TOL {
                    indicator(!(x0 <= x[0] && x[0] <= x1))
                } else {
                    let s = (t0 - t).sqrt();
                    let la = std_normal_log_cdf((x[0] - x1) / s);
                    let lb = std_normal_log_cdf((x0 - x[0]) / s);
                    let m = la.max(lb);
                    m + ((la - m).exp() + (lb - m).exp()).ln()
                }
            }
        }
    }

    fn grad_u(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match self.kind {
            Kind::Unconstrained { .. } => {}
            Kind::Example1 | Kind::Example2 if self.at_or_after_horizon(t) => {}
            Kind::Example1 => {
                let s = (self.horizon - t).sqrt();
                out[0] = std_normal_pdf(x[0] / s) / s;
            }
            Kind::Example2 => {
                if x[0] > 0.0 {
                    let s = (self.horizon - t).sqrt();
                    out[0] = 2.0 * std_normal_pdf(x[0] / s) / s;
                }
            }
            Kind::Example3 { t0, x0, x1 } => {
                if t < t0 - TIME_TOL {
                    let s = (t0 - t).sqrt();
                    out[0] = (std_normal_pdf((x[0] - x1) / s) - std_normal_pdf((x0 - x[0]) / s)) / s;
                }
            }
        }
    }

    fn grad_log_u(&self, t: f64, x: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        let log_u = self.log_u(t, x);
        if log_u == f64::NEG_INFINITY {
            return false;
        }
        match self.kind {
            Kind::Unconstrained { .. } => {}
            Kind::Example1 | Kind::Example2 if self.at_or_after_horizon(t) => {}
            Kind::Example1 => {
                let s = (self.horizon - t).sqrt();
                out[0] = inverse_mills_ratio(x[0] / s) / s;
            }
            Kind::Example2 => {
                let s = (self.horizon - t).sqrt();
                let z = x[0] / s;
                out[0] = 2.0 * std_normal_pdf(z) / std_normal_central(z) / s;
            }
            Kind::Example3 { t0, x0, x1 } => {
                if t < t0 - TIME_TOL {
                    let s = (t0 - t).sqrt();
                    let pa = (std_normal_log_pdf((x[0] - x1) / s) - log_u).exp();
                    let pb = (std_normal_log_pdf((x0 - x[0]) / s) - log_u).exp();
                    out[0] = (pa - pb) / s;
                }
            }
        }
        true
    }
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    const PHI_MINUS_1_5: f64 = 0.066807201268858066004;
    const EX2_AT_0_2: f64 = 0.15851941887820604608;
    const EX3_AT_ORIGIN: f64 = 7.7442164310440836377e-6;

    fn ex3() -> ClosedFormSolution {
        ClosedFormSolution::example3(1.0, 0.2, -2.0, 2.0).unwrap()
    }

    #[test]
    fn example1_values() {
        let e = ClosedFormSolution::example1(1.0).unwrap();
        assert_eq!(e.u(0.0, &[0.0]), 0.5);
        assert!((e.v(0.0, &[0.0]) - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(e.u(1.0, &[-1.0]), 0.0);
        assert_eq!(e.v(1.0, &[-1.0]), f64::INFINITY);
        assert_eq!(e.u(1.0, &[0.0]), 0.0, "boundary takes the forbidden value");
        assert_eq!(e.u(1.0, &[0.5]), 1.0);
        assert!((e.u(0.0, &[-1.5]) - PHI_MINUS_1_5).abs() < 1e-15);
    }

    #[test]
    fn example2_values() {
        let e = ClosedFormSolution::example2(1.0).unwrap();
        assert_eq!(e.u(0.5, &[0.0]), 0.0);
        assert_eq!(e.v(0.5, &[0.0]), f64::INFINITY);
        assert!((e.u(0.5, &[50.0]) - 1.0).abs() < 1e-15);
        assert!((e.u(0.0, &[0.2]) - EX2_AT_0_2).abs() < 1e-16);
    }

    #[test]
    fn example3_values() {
        let e = ex3();
        assert_eq!(e.u(0.2, &[0.5]), 0.0);
        assert_eq!(e.u(0.2, &[2.0]), 0.0);
        assert_eq!(e.u(0.2, &[2.5]), 1.0);
        assert_eq!(e.u(0.5, &[0.0]), 1.0);
        assert_eq!(e.v(0.5, &[0.0]), 0.0);
        assert!((e.u(0.0, &[0.0]) / EX3_AT_ORIGIN - 1.0).abs() < 1e-12);
    }

    #[test]
    fn example3_rejects_bad_geometry() {
        assert!(matches!(
            ClosedFormSolution::example3(1.0, 0.2, 2.0, -2.0),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(ClosedFormSolution::example3(1.0, 1.0, -2.0, 2.0).is_err());
        assert!(ClosedFormSolution::example3(1.0, 0.0, -2.0, 2.0).is_err());
    }

    #[test]
    fn printed_alpha_values() {
        let e1 = ClosedFormSolution::example1(1.0).unwrap();
        assert!((e1.alpha_star_printed(0.0, &[0.0]) - 0.79788456080286535588).abs() < 1e-15);
        let e2 = ClosedFormSolution::example2(1.0).unwrap();
        assert!((e2.alpha_star_printed(0.75, &[1.0]) - 0.22625869645007675282).abs() < 1e-15);
        assert_eq!(e1.alpha_star_printed(1.0, &[0.3]), 0.0);
    }

    #[test]
    fn policy_matches_printed_alpha() {
        let e1 = ClosedFormSolution::example1(1.0).unwrap();
        let p = e1.policy();
        assert!((p.evaluate(0.0, &[0.0])[0] - 2.0 * std_normal_pdf(0.0)).abs() < 1e-15);
        assert_eq!(p.evaluate(1.0, &[0.5]), vec![0.0]);
        // far in the tail φ/Φ stays finite and ≈ −z/√(T−t)
        let a = p.evaluate(0.0, &[-50.0])[0];
        assert!((a / 50.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn unconstrained_case_dispatch() {
        let field: Arc<dyn CoefficientField> = Arc::new(ConstantField::scalar(0.3, 2.0));
        let make = |costs| ProblemSpec::new(field.clone(), ConstraintSet::empty(1, 1.0), costs, 1.0).unwrap();
        let UnconstrainedCase::Closed(zero) = unconstrained_case(&make(CostSpec::zero())).unwrap() else {
            panic!("constant costs have a closed form");
        };
        assert_eq!(zero.v(0.3, &[4.0]), 0.0);
        assert_eq!(zero.policy().evaluate(0.3, &[4.0]), vec![0.0]);
        let terminal = CostSpec {
            running: CostFn::Zero,
            terminal: CostFn::Constant(0.8),
        };
        let UnconstrainedCase::Closed(g) = unconstrained_case(&make(terminal)).unwrap() else {
            panic!()
        };
        assert!((g.u(0.0, &[0.0]) - (-0.4f64).exp()).abs() < 1e-15);
        assert!((g.v(0.0, &[0.0]) - 0.8).abs() < 1e-15);
        let running = CostSpec {
            running: CostFn::Constant(1.5),
            terminal: CostFn::Zero,
        };
        let UnconstrainedCase::Closed(f) = unconstrained_case(&make(running)).unwrap() else {
            panic!()
        };
        assert!((f.v(0.2, &[1.0]) - 1.5 * 0.8).abs() < 1e-15);
        let custom = CostSpec {
            running: CostFn::custom(|_, x| x[0] * x[0]),
            terminal: CostFn::Zero,
        };
        assert!(matches!(unconstrained_case(&make(custom)).unwrap(), UnconstrainedCase::DeferToEstimator));
        let ex1 = ClosedFormSolution::example1(1.0).unwrap().problem();
        assert!(unconstrained_case(&ex1).is_err());
    }
}
