//! Brute-force survival probability `Q(min_{s≤τ} W_s > −x)` by plain path
//! simulation, with no bridge test and no killed-expectation machinery.

use crate::dynamics::{NoiseStream, TimeGrid};
use crate::error::{Error, Result};
use crate::estimator::{Estimate, McConfig};
use crate::oracles::std_normal_cdf;
use crate::parallel::map_paths;

/// `ζ(1/2)/√(2π)`: monitoring a Brownian barrier only at grid points acts
/// like moving the barrier away by this many `√dt`.
pub const DISCRETE_MONITORING_SHIFT: f64 = 0.5826;

/// `0.5826·√dt`.
pub fn discrete_monitoring_shift(dt: f64) -> f64 {
    DISCRETE_MONITORING_SHIFT * dt.sqrt()
}

/// Survival probability under grid-point monitoring with step `dt`,
/// approximated by `2Φ((x + 0.5826·√dt)/√τ) − 1`.
pub fn discrete_survival_probability(x: f64, tau: f64, dt: f64) -> f64 {
    2.0 * std_normal_cdf((x + discrete_monitoring_shift(dt)) / tau.sqrt()) - 1.0
}

/// Fraction of simulated Brownian paths on `[0, τ]` whose grid values all
/// stay above `−x`. Only `n_paths`, `dt`, `master_seed` and `workers` of
/// `cfg` are used.
pub fn reflection_bruteforce_u(x: f64, tau: f64, cfg: &McConfig) -> Result<Estimate> {
    if !(x > 0.0) {
        return Err(Error::InvalidArgument(format!("barrier distance must be positive, got {x}")));
    }
    let grid = TimeGrid::new(0.0, tau, cfg.dt)?;
    if cfg.n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    let samples = map_paths(cfg.n_paths, cfg.workers, |i| {
        let mut normals = NoiseStream::new(cfg.master_seed, i).normals();
        let mut w = 0.0;
        for k in 0..grid.n_steps() {
            w += grid.step(k).sqrt() * normals.next_normal();
            if x + w <= 0.0 {
                return Some(0.0);
            }
        }
        Some(1.0)
    });
    Estimate::from_samples(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn far_barrier_always_survives() {
        let e = reflection_bruteforce_u(50.0, 1.0, &McConfig::new(1000, 0.01, 3)).unwrap();
        assert_eq!(e.mean, 1.0);
    }

    #[test]
    fn shift_moves_target_up() {
        let exact = 2.0 * std_normal_cdf(0.2) - 1.0;
        assert!(discrete_survival_probability(0.2, 1.0, 0.0005) > exact);
        assert_eq!(discrete_survival_probability(0.2, 1.0, 0.0), exact);
    }

    #[test]
    fn rejects_non_positive_barrier() {
        assert!(reflection_bruteforce_u(0.0, 1.0, &McConfig::new(10, 0.01, 3)).is_err());
    }
}
