use crate::error::{Error, Result};

/// Slack used when rounding the step count so that `(1 - 0) / 0.005` gives 200
/// steps rather than 201 with a vanishing last step.
const STEP_COUNT_SLACK: f64 = 1e-9;

/// A uniform time grid on `[t_start, t_end]` whose last point is clamped to
/// `t_end` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
            return Err(Error::InvalidArgument(format!(
                "time grid needs t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let n_steps = (((t_end - t_start) / dt) - STEP_COUNT_SLACK).ceil().max(1.0) as usize;
        Ok(Self {
            t_start,
            t_end,
            dt,
            n_steps,
        })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Grid point `k`, for `k ∈ 0..=n_steps`.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.t_end
        } else {
            (self.t_start + k as f64 * self.dt).min(self.t_end)
        }
    }

    /// Length of step `k → k+1`.
    pub fn step(&self, k: usize) -> f64 {
        self.time(k + 1) - self.time(k)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|k| self.time(k))
    }

    /// Index of the grid point closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = ((t - self.t_start) / self.dt).round();
        (k.max(0.0) as usize).min(self.n_steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_at_paper_step() {
        let g = TimeGrid::new(0.0, 1.0, 0.005).unwrap();
        assert_eq!(g.n_steps(), 200);
        assert_eq!(g.time(200), 1.0);
        assert!((g.time(40) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn last_step_is_clamped() {
        let g = TimeGrid::new(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.n_steps(), 4);
        assert!((g.step(3) - 0.1).abs() < 1e-12);
        assert_eq!(g.time(4), 1.0);
        let ts: Vec<f64> = g.times().collect();
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn tiny_interval_has_one_step() {
        let g = TimeGrid::new(0.99, 1.0, 0.5).unwrap();
        assert_eq!(g.n_steps(), 1);
        assert_eq!(g.step(0), 1.0 - 0.99);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(TimeGrid::new(1.0, 1.0, 0.1).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0.0).is_err());
        assert!(TimeGrid::new(0.0, 1.0, f64::NAN).is_err());
    }
}
