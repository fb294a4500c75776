//! The martingale `e^{−½∫_t^{s∧τ}f}·u(s∧τ, Z_{s∧τ})`, whose mean must stay
//! at `u(t, x)` for every `s`.

use crate::dynamics::{walk, NoiseStream, TimeGrid, WalkSpec};
use crate::error::{Error, Result};
use crate::estimator::{Estimate, McConfig, ProblemSpec};
use crate::oracles::{unconstrained_case, UnconstrainedCase};
use crate::parallel::map_paths;
use crate::policy::UFunction;

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaCheckpoint {
    pub requested: f64,
    /// The grid time actually used.
    pub time: f64,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaReport {
    /// `u(t, x)`.
    pub target: f64,
    pub checkpoints: Vec<ThetaCheckpoint>,
}

impl ThetaReport {
    /// Largest `|estimate − target| / SE` (0 when SE and the error are 0).
    pub fn max_target_z(&self) -> f64 {
        self.checkpoints
            .iter()
            .map(|c| z_score(c.estimate.mean - self.target, c.estimate.std_error))
            .fold(0.0, f64::max)
    }

    /// Largest pairwise `|Δestimate| / √(SE₁² + SE₂²)`.
    pub fn max_pairwise_z(&self) -> f64 {
        let c = &self.checkpoints;
        let mut worst = 0.0f64;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                let (a, b) = (&c[i].estimate, &c[j].estimate);
                worst = worst.max(z_score(a.mean - b.mean, a.std_error.hypot(b.std_error)));
            }
        }
        worst
    }
}

pub(crate) fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY
    } else {
        diff.abs() / se
    }
}

/// Estimate `E[e^{−½∫f}·u(s∧τ, Z_{s∧τ})]` at each checkpoint `s ∈ (t, T)`,
/// snapped to the nearest grid time. `u = None` is accepted only for
/// unconstrained problems with constant costs.
pub fn theta_martingale_check(
    problem: &ProblemSpec,
    u: Option<&dyn UFunction>,
    t: f64,
    x: &[f64],
    checkpoints: &[f64],
    cfg: &McConfig,
) -> Result<ThetaReport> {
    cfg.validate()?;
    problem.check_point(t, x)?;
    let fallback;
    let u: &dyn UFunction = match u {
        Some(u) => u,
        None => match unconstrained_case(problem) {
            Ok(UnconstrainedCase::Closed(sol)) => {
                fallback = sol;
                &fallback
            }
            _ => return Err(Error::RequiresUOracle),
        },
    };
    if problem.constraint().contains_unchecked(t, x) {
        return Err(Error::PointOutsideC { t, x: x.to_vec() });
    }
    let horizon = problem.horizon();
    if let Some(s) = checkpoints.iter().find(|s| !(**s > t && **s < horizon)) {
        return Err(Error::InvalidArgument(format!("checkpoint {s} outside ({t}, {horizon})")));
    }
    let grid = TimeGrid::new(t, horizon, cfg.dt)?;
    let indices: Vec<usize> = checkpoints.iter().map(|s| grid.nearest_index(*s).max(1)).collect();
    let spec = WalkSpec {
        field: problem.field(),
        policy: None,
        constraint: Some(problem.constraint()),
        use_bridge: cfg.use_bridge,
        stop_on_kill: true,
        running_cost: Some(&problem.costs().running),
    };
    let samples: Vec<Option<Vec<f64>>> = map_paths(cfg.n_paths, cfg.workers, |i| {
        let mut values = vec![0.0; indices.len()];
        let mut state = x.to_vec();
        walk(&spec, &grid, &mut state, &NoiseStream::new(cfg.master_seed, i), |view| {
            if view.killed {
                return;
            }
            for (v, k) in values.iter_mut().zip(&indices) {
                if *k == view.index {
                    *v = (-0.5 * view.running_cost).exp() * u.u(view.time, view.state);
                }
            }
        })
        .ok()?;
        values.iter().all(|v| v.is_finite()).then_some(values)
    });
    let checkpoints = checkpoints
        .iter()
        .zip(&indices)
        .enumerate()
        .map(|(j, (s, k))| {
            Ok(ThetaCheckpoint {
                requested: *s,
                time: grid.time(*k),
                estimate: Estimate::from_samples(samples.iter().map(|v| v.as_ref().map(|v| v[j])))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThetaReport {
        target: u.u(t, x),
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ConstantField;
    use crate::estimator::CostSpec;
    use crate::geometry::ConstraintSet;
    use std::sync::Arc;

    #[test]
    fn unconstrained_is_exact() {
        let p = ProblemSpec::new(Arc::new(ConstantField::brownian(1)), ConstraintSet::empty(1, 1.0), CostSpec::zero(), 1.0)
            .unwrap();
        let r = theta_martingale_check(&p, None, 0.0, &[0.0], &[0.25, 0.5, 0.75], &McConfig::new(200, 0.01, 1)).unwrap();
        assert_eq!(r.target, 1.0);
        for c in &r.checkpoints {
            assert_eq!(c.estimate.mean, 1.0);
            assert_eq!(c.estimate.std_error, 0.0);
        }
        assert_eq!(r.max_target_z(), 0.0);
        assert_eq!(r.max_pairwise_z(), 0.0);
    }

    #[test]
    fn missing_oracle_is_reported() {
        let c = ConstraintSet::running_half_space(1, 1.0, crate::geometry::HalfSpace::new(0, 0.0, crate::geometry::Side::Below))
            .unwrap();
        let p = ProblemSpec::new(Arc::new(ConstantField::brownian(1)), c, CostSpec::zero(), 1.0).unwrap();
        let err = theta_martingale_check(&p, None, 0.0, &[1.0], &[0.5], &McConfig::new(10, 0.01, 1)).unwrap_err();
        assert_eq!(err, Error::RequiresUOracle);
    }

    #[test]
    fn checkpoints_must_be_interior() {
        let p = ProblemSpec::new(Arc::new(ConstantField::brownian(1)), ConstraintSet::empty(1, 1.0), CostSpec::zero(), 1.0)
            .unwrap();
        assert!(theta_martingale_check(&p, None, 0.0, &[0.0], &[1.0], &McConfig::new(10, 0.01, 1)).is_err());
    }
}
