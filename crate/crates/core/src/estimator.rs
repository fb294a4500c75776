//! Monte Carlo estimation of the killed expectation
//! `u(t,x) = E[exp(−½∫_t^T f(s,Z_s)ds − ½g(Z_T)) · 1{T < τ_D}]`
//! and of its spatial gradient.

use std::fmt;
use std::sync::Arc;

use crate::dynamics::{derive_seed, walk, CoefficientField, NoiseStream, TimeGrid, WalkSpec};
use crate::error::{Error, Result};
use crate::geometry::{ConstraintSet, TIME_TOL};
use crate::parallel::map_paths;

type ScalarFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// A non-negative cost function of `(t, x)`.
#[derive(Clone)]
pub enum CostFn {
    Zero,
    Constant(f64),
    Custom(Arc<ScalarFn>),
}

impl CostFn {
    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => *c,
            Self::Custom(f) => f(t, x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero) || matches!(self, Self::Constant(c) if *c == 0.0)
    }
}

impl fmt::Debug for CostFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Running cost `f(t,x)` and terminal cost `g`, the latter evaluated as
/// `g(T, x)`.
#[derive(Debug, Clone)]
pub struct CostSpec {
    pub running: CostFn,
    pub terminal: CostFn,
}

impl CostSpec {
    pub fn zero() -> Self {
        Self {
            running: CostFn::Zero,
            terminal: CostFn::Zero,
        }
    }
}

impl Default for CostSpec {
    fn default() -> Self {
        Self::zero()
    }
}

#[derive(Clone)]
pub struct ProblemSpec {
    field: Arc<dyn CoefficientField>,
    constraint: ConstraintSet,
    costs: CostSpec,
    horizon: f64,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dim_state", &self.field.dim_state())
            .field("dim_noise", &self.field.dim_noise())
            .field("constraint", &self.constraint)
            .field("costs", &self.costs)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl ProblemSpec {
    pub fn new(field: Arc<dyn CoefficientField>, constraint: ConstraintSet, costs: CostSpec, horizon: f64) -> Result<Self> {
        if constraint.dim() != field.dim_state() {
            return Err(Error::DimensionMismatch {
                expected: field.dim_state(),
                got: constraint.dim(),
            });
        }
        if (constraint.horizon() - horizon).abs() > TIME_TOL {
            return Err(Error::InvalidArgument(format!(
                "constraint horizon {} differs from problem horizon {horizon}",
                constraint.horizon()
            )));
        }
        Ok(Self {
            field,
            constraint,
            costs,
            horizon,
        })
    }

    pub fn field(&self) -> &dyn CoefficientField {
        self.field.as_ref()
    }

    pub fn field_arc(&self) -> Arc<dyn CoefficientField> {
        self.field.clone()
    }

    pub fn constraint(&self) -> &ConstraintSet {
        &self.constraint
    }

    pub fn costs(&self) -> &CostSpec {
        &self.costs
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.field.dim_state()
    }

    pub(crate) fn check_point(&self, t: f64, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !(t >= 0.0 && t <= self.horizon + TIME_TOL) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "point ({t}, {x:?}) outside [0, {}]×ℝ^d",
                self.horizon
            )));
        }
        Ok(())
    }

    /// `exp(−½g(x))·1{(T,x) ∉ D}`.
    pub fn terminal_value(&self, x: &[f64]) -> f64 {
        if self.constraint.contains_unchecked(self.horizon, x) {
            0.0
        } else {
            (-0.5 * self.costs.terminal.eval(self.horizon, x)).exp()
        }
    }
}

/// Fraction of aborted paths above which an [`Estimate`] carries a warning.
pub const NONFINITE_WARNING_FRACTION: f64 = 1e-3;

/// A Monte Carlo mean. `n_paths` counts the paths that contributed;
/// `n_nonfinite` counts those aborted by a non-finite state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub n_nonfinite: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            std_error: 0.0,
            n_paths: 0,
            n_nonfinite: 0,
        }
    }

    /// Mean and standard error of the finite samples, accumulated in order.
    pub fn from_samples<I>(samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = Option<f64>>,
    {
        let (mut n, mut mean, mut m2, mut bad) = (0usize, 0.0f64, 0.0f64, 0usize);
        for s in samples {
            match s {
                Some(v) => {
                    n += 1;
                    let delta = v - mean;
                    mean += delta / n as f64;
                    m2 += delta * (v - mean);
                }
                None => bad += 1,
            }
        }
        if n == 0 {
            return Err(Error::AllPathsNonFinite { n_paths: bad });
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        Ok(Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n_paths: n,
            n_nonfinite: bad,
        })
    }

    /// Message for the warning channel when too many paths were aborted.
    pub fn warning(&self) -> Option<String> {
        let total = self.n_paths + self.n_nonfinite;
        (self.n_nonfinite as f64 > NONFINITE_WARNING_FRACTION * total as f64).then(|| {
            format!(
                "{} of {total} paths aborted on a non-finite state; the grid may be too coarse",
                self.n_nonfinite
            )
        })
    }
}

/// Monte Carlo settings shared by the estimators and checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub master_seed: u64,
    /// Brownian-bridge kill test for running half-spaces.
    pub use_bridge: bool,
    /// Worker threads; `None` uses the global pool. Results do not depend on it.
    pub workers: Option<usize>,
}

impl McConfig {
    pub fn new(n_paths: usize, dt: f64, master_seed: u64) -> Self {
        Self {
            n_paths,
            dt,
            master_seed,
            use_bridge: true,
            workers: None,
        }
    }

    pub fn with_bridge(mut self, use_bridge: bool) -> Self {
        self.use_bridge = use_bridge;
        self
    }

    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Seed for the streams used at point `(t, x)`. Estimates at the same point
/// reuse streams; different points get unrelated ones.
pub(crate) fn point_seed(master_seed: u64, t: f64, x: &[f64]) -> u64 {
    let words: Vec<u64> = std::iter::once(t.to_bits()).chain(x.iter().map(|v| v.to_bits())).collect();
    derive_seed(master_seed, &words)
}

/// Discounted payoff of one uncontrolled path from `(t, x)`, or `None` if
/// the path blew up.
fn path_payoff(problem: &ProblemSpec, grid: &TimeGrid, x: &[f64], stream: &NoiseStream, use_bridge: bool) -> Option<f64> {
    let spec = WalkSpec {
        field: problem.field(),
        policy: None,
        constraint: Some(problem.constraint()),
        use_bridge,
        stop_on_kill: true,
        running_cost: Some(&problem.costs().running),
    };
    let mut state = x.to_vec();
    let out = walk(&spec, grid, &mut state, stream, |_| {}).ok()?;
    if out.kill.killed {
        return Some(0.0);
    }
    let g = problem.costs().terminal.eval(problem.horizon(), &state);
    let value = (-0.5 * out.running_cost - 0.5 * g).exp();
    value.is_finite().then_some(value)
}

fn estimate_u_seeded(problem: &ProblemSpec, t: f64, x: &[f64], cfg: &McConfig, seed: u64) -> Result<Estimate> {
    cfg.validate()?;
    problem.check_point(t, x)?;
    if t >= problem.horizon() - TIME_TOL {
        return Ok(Estimate::exact(problem.terminal_value(x)));
    }
    let grid = TimeGrid::new(t, problem.horizon(), cfg.dt)?;
    let samples = map_paths(cfg.n_paths, cfg.workers, |i| {
        path_payoff(problem, &grid, x, &NoiseStream::new(seed, i), cfg.use_bridge)
    });
    Estimate::from_samples(samples)
}

/// Monte Carlo estimate of `u(t, x)` on a grid from `t` to `T` with step
/// `cfg.dt`. Killed paths contribute 0. At `t = T` the exact terminal value
/// is returned with zero standard error.
pub fn estimate_u(problem: &ProblemSpec, t: f64, x: &[f64], cfg: &McConfig) -> Result<Estimate> {
    estimate_u_seeded(problem, t, x, cfg, point_seed(cfg.master_seed, t, x))
}

/// [`estimate_u`] at each point; an error at one point does not affect the
/// others.
pub fn estimate_u_grid(problem: &ProblemSpec, points: &[(f64, Vec<f64>)], cfg: &McConfig) -> Vec<Result<Estimate>> {
    points.iter().map(|(t, x)| estimate_u(problem, *t, x, cfg)).collect()
}

/// Central-difference gradient of `u` with per-coordinate standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub gradient: Vec<f64>,
    pub std_error: Vec<f64>,
    pub steps: Vec<f64>,
    pub n_paths: usize,
    pub n_nonfinite: usize,
}

/// Default difference step `max(10⁻³, 10⁻²·√(T−t))`.
pub fn default_fd_step(horizon: f64, t: f64) -> f64 {
    (1e-2 * (horizon - t).max(0.0).sqrt()).max(1e-3)
}

/// `(û(x+hᵢeᵢ) − û(x−hᵢeᵢ)) / 2hᵢ` with both sides driven by the same
/// streams. `h = None` uses [`default_fd_step`] in every coordinate.
pub fn estimate_grad_u(
    problem: &ProblemSpec,
    t: f64,
    x: &[f64],
    h: Option<&[f64]>,
    cfg: &McConfig,
) -> Result<GradientEstimate> {
    cfg.validate()?;
    problem.check_point(t, x)?;
    let d = problem.dim();
    let steps: Vec<f64> = match h {
        Some(h) if h.len() != d => return Err(Error::DimensionMismatch { expected: d, got: h.len() }),
        Some(h) => h.to_vec(),
        None => vec![default_fd_step(problem.horizon(), t); d],
    };
    if steps.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidArgument(format!("difference steps must be positive, got {steps:?}")));
    }
    let probes: Vec<(Vec<f64>, Vec<f64>)> = (0..d)
        .map(|i| {
            let (mut up, mut down) = (x.to_vec(), x.to_vec());
            up[i] += steps[i];
            down[i] -= steps[i];
            (up, down)
        })
        .collect();
    for (up, down) in &probes {
        for p in [up, down] {
            if problem.constraint().contains_unchecked(t, p) {
                return Err(Error::PointOutsideC { t, x: p.clone() });
            }
        }
    }
    if t >= problem.horizon() - TIME_TOL {
        let gradient = probes
            .iter()
            .zip(&steps)
            .map(|((up, down), h)| (problem.terminal_value(up) - problem.terminal_value(down)) / (2.0 * h))
            .collect();
        return Ok(GradientEstimate {
            gradient,
            std_error: vec![0.0; d],
            steps,
            n_paths: 0,
            n_nonfinite: 0,
        });
    }
    let seed = point_seed(cfg.master_seed, t, x);
    let grid = TimeGrid::new(t, problem.horizon(), cfg.dt)?;
    let diffs: Vec<Option<Vec<f64>>> = map_paths(cfg.n_paths, cfg.workers, |i| {
        let stream = NoiseStream::new(seed, i);
        probes
            .iter()
            .zip(&steps)
            .map(|((up, down), h)| {
                let a = path_payoff(problem, &grid, up, &stream, cfg.use_bridge)?;
                let b = path_payoff(problem, &grid, down, &stream, cfg.use_bridge)?;
                Some((a - b) / (2.0 * h))
            })
            .collect()
    });
    let mut gradient = Vec::with_capacity(d);
    let mut std_error = Vec::with_capacity(d);
    let mut counts = (0, 0);
    for i in 0..d {
        let e = Estimate::from_samples(diffs.iter().map(|p| p.as_ref().map(|v| v[i])))?;
        gradient.push(e.mean);
        std_error.push(e.std_error);
        counts = (e.n_paths, e.n_nonfinite);
    }
    Ok(GradientEstimate {
        gradient,
        std_error,
        steps,
        n_paths: counts.0,
        n_nonfinite: counts.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ConstantField;
    use crate::geometry::{HalfSpace, Side};

    fn brownian_problem(constraint: ConstraintSet, costs: CostSpec) -> ProblemSpec {
        ProblemSpec::new(Arc::new(ConstantField::brownian(1)), constraint, costs, 1.0).unwrap()
    }

    fn ex1() -> ProblemSpec {
        let c = ConstraintSet::terminal_half_space(1, 1.0, HalfSpace::new(0, 0.0, Side::Below)).unwrap();
        brownian_problem(c, CostSpec::zero())
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [0.5, 1.5, 2.0, -1.0, 3.25];
        let e = Estimate::from_samples(xs.iter().map(|v| Some(*v))).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((e.mean - mean).abs() < 1e-15);
        assert!((e.std_error - (var / n).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn all_nonfinite_is_an_error() {
        assert_eq!(
            Estimate::from_samples([None, None]),
            Err(Error::AllPathsNonFinite { n_paths: 2 })
        );
    }

    #[test]
    fn warning_threshold() {
        let mut e = Estimate::exact(1.0);
        e.n_paths = 1000;
        e.n_nonfinite = 1;
        assert!(e.warning().is_none());
        e.n_nonfinite = 2;
        assert!(e.warning().is_some());
    }

    #[test]
    fn unconstrained_zero_cost_is_exactly_one() {
        let p = brownian_problem(ConstraintSet::empty(1, 1.0), CostSpec::zero());
        let e = estimate_u(&p, 0.0, &[0.3], &McConfig::new(1000, 0.01, 1)).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
        let g = estimate_grad_u(&p, 0.0, &[0.3], None, &McConfig::new(500, 0.01, 1)).unwrap();
        assert_eq!(g.gradient, vec![0.0]);
    }

    #[test]
    fn terminal_time_is_exact() {
        let p = ex1();
        let cfg = McConfig::new(10, 0.01, 1);
        assert_eq!(estimate_u(&p, 1.0, &[-1.0], &cfg).unwrap(), Estimate::exact(0.0));
        assert_eq!(estimate_u(&p, 1.0, &[1.0], &cfg).unwrap(), Estimate::exact(1.0));
        assert_eq!(estimate_u(&p, 1.0, &[0.0], &cfg).unwrap().mean, 0.0);
    }

    #[test]
    fn estimate_is_worker_independent() {
        let p = ex1();
        let base = McConfig::new(20_000, 0.01, 7);
        let a = estimate_u(&p, 0.0, &[0.1], &base.with_workers(Some(1))).unwrap();
        let b = estimate_u(&p, 0.0, &[0.1], &base.with_workers(Some(4))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_point_list() {
        assert!(estimate_u_grid(&ex1(), &[], &McConfig::new(10, 0.1, 0)).is_empty());
    }

    #[test]
    fn probe_in_forbidden_set_is_rejected() {
        let c = ConstraintSet::running_half_space(1, 1.0, HalfSpace::new(0, 0.0, Side::Below)).unwrap();
        let p = brownian_problem(c, CostSpec::zero());
        let err = estimate_grad_u(&p, 0.0, &[0.001], Some(&[0.01]), &McConfig::new(10, 0.1, 0)).unwrap_err();
        assert!(matches!(err, Error::PointOutsideC { .. }));
    }

    #[test]
    fn default_step() {
        assert_eq!(default_fd_step(1.0, 1.0), 1e-3);
        assert!((default_fd_step(1.0, 0.0) - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn bad_config_is_rejected() {
        let p = ex1();
        assert!(estimate_u(&p, 0.0, &[0.0], &McConfig::new(0, 0.1, 0)).is_err());
        assert!(estimate_u(&p, 0.0, &[0.0], &McConfig::new(1, -0.1, 0)).is_err());
        assert!(estimate_u(&p, 0.0, &[0.0, 1.0], &McConfig::new(1, 0.1, 0)).is_err());
        assert!(estimate_u(&p, 1.5, &[0.0], &McConfig::new(1, 0.1, 0)).is_err());
    }
}
