//! Realised cost `∫(f + |a|²)ds + g(X_T)` of a feedback policy.

use crate::dynamics::{walk, NoiseStream, TimeGrid, WalkSpec};
use crate::error::{Error, Result};
use crate::estimator::{Estimate, McConfig, ProblemSpec};
use crate::parallel::map_paths;
use crate::policy::FeedbackPolicy;

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub policy: String,
    pub t: f64,
    pub x: Vec<f64>,
    pub estimate: Estimate,
    /// `v(t, x)` to compare against, when known.
    pub reference_v: Option<f64>,
    /// Share of paths with a grid point in `D`.
    pub violation_fraction: f64,
    pub violations: usize,
    /// Total number of steps at which the policy's clamp was active.
    pub clamp_activations: u64,
}

impl CostReport {
    pub fn with_reference(mut self, v: f64) -> Self {
        self.reference_v = Some(v);
        self
    }

    /// Paths that entered `D` keep their realised cost in the estimate; the
    /// cost of an inadmissible policy is `+∞` by convention.
    pub fn note(&self) -> Option<String> {
        (self.violations > 0).then(|| {
            format!(
                "{} paths entered the forbidden set; their realised cost is included, \
                 although an inadmissible policy has infinite cost",
                self.violations
            )
        })
    }
}

struct PathCost {
    cost: f64,
    violated: bool,
    clamps: usize,
}

/// Simulate `policy` from `(t, x)` on `cfg.n_paths` paths. Violations are
/// detected on grid points only and do not stop the path.
pub fn cost_of_policy(
    problem: &ProblemSpec,
    policy: &FeedbackPolicy,
    t: f64,
    x: &[f64],
    cfg: &McConfig,
) -> Result<CostReport> {
    cfg.validate()?;
    problem.check_point(t, x)?;
    if policy.dim_control() != problem.field().dim_noise() {
        return Err(Error::DimensionMismatch {
            expected: problem.field().dim_noise(),
            got: policy.dim_control(),
        });
    }
    if problem.constraint().contains_unchecked(t, x) {
        return Err(Error::PointOutsideC { t, x: x.to_vec() });
    }
    let grid = TimeGrid::new(t, problem.horizon(), cfg.dt)?;
    let spec = WalkSpec {
        field: problem.field(),
        policy: Some(policy),
        constraint: Some(problem.constraint()),
        use_bridge: false,
        stop_on_kill: false,
        running_cost: Some(&problem.costs().running),
    };
    let paths: Vec<Option<PathCost>> = map_paths(cfg.n_paths, cfg.workers, |i| {
        let mut state = x.to_vec();
        let out = walk(&spec, &grid, &mut state, &NoiseStream::new(cfg.master_seed, i), |_| {}).ok()?;
        let g = problem.costs().terminal.eval(problem.horizon(), &state);
        let cost = out.running_cost + out.control_energy + g;
        cost.is_finite().then_some(PathCost {
            cost,
            violated: out.kill.killed,
            clamps: out.clamp_activations,
        })
    });
    let estimate = Estimate::from_samples(paths.iter().map(|p| p.as_ref().map(|p| p.cost)))?;
    let violations = paths.iter().flatten().filter(|p| p.violated).count();
    Ok(CostReport {
        policy: policy.source().to_string(),
        t,
        x: x.to_vec(),
        estimate,
        reference_v: None,
        violation_fraction: violations as f64 / estimate.n_paths as f64,
        violations,
        clamp_activations: paths.iter().flatten().map(|p| p.clamps as u64).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ConstantField;
    use crate::estimator::CostSpec;
    use crate::geometry::{ConstraintSet, HalfSpace, Side};
    use crate::policy::PolicySource;
    use std::sync::Arc;

    #[test]
    fn zero_policy_without_costs_is_free() {
        let p = ProblemSpec::new(Arc::new(ConstantField::brownian(1)), ConstraintSet::empty(1, 1.0), CostSpec::zero(), 1.0)
            .unwrap();
        let r = cost_of_policy(&p, &FeedbackPolicy::zero(1), 0.0, &[0.0], &McConfig::new(100, 0.01, 1)).unwrap();
        assert_eq!(r.estimate.mean, 0.0);
        assert_eq!(r.violation_fraction, 0.0);
        assert!(r.note().is_none());
    }

    #[test]
    fn constant_control_energy_and_violations() {
        let c = ConstraintSet::running_half_space(1, 1.0, HalfSpace::new(0, 0.0, Side::Below)).unwrap();
        let p = ProblemSpec::new(Arc::new(ConstantField::brownian(1)), c, CostSpec::zero(), 1.0).unwrap();
        let pol = FeedbackPolicy::from_fn(1, PolicySource::UserSupplied, |_, _, o| o[0] = -3.0);
        let r = cost_of_policy(&p, &pol, 0.0, &[0.1], &McConfig::new(500, 0.01, 1)).unwrap();
        assert!((r.estimate.mean - 9.0).abs() < 1e-9);
        assert!(r.violation_fraction > 0.9);
        assert!(r.note().is_some());
        assert!(cost_of_policy(&p, &pol, 0.0, &[-0.1], &McConfig::new(5, 0.01, 1)).is_err());
    }
}
