//! The forbidden set `D ⊂ [0,T]×ℝᵈ`, its complement `C`, and first-entry
//! detection on a discrete time grid.
//!
//! `D` is closed: boundary points belong to it, so every comparison below is
//! `≤`/`≥`. A discrete step landing exactly on `∂C` is a kill.
//!
//! For running half-spaces the grid test alone misses excursions between
//! grid points; with `use_bridge` the step `k → k+1` is additionally killed
//! with the Brownian-bridge crossing probability
//! `exp(−2·d_k·d_{k+1} / (σ̄²·Δt))`, which is exact for constant coefficients.
//! Predicate sets get grid-only detection and therefore overestimate
//! survival by `O(√Δt)`.

use std::fmt;
use std::sync::Arc;

use crate::dynamics::{CoefficientField, NoiseStream, PathSample};
use crate::error::{Error, Result};

/// Tolerance for matching grid times against `T` or a slab time `t₀`.
pub const TIME_TOL: f64 = 1e-9;

/// Default radius used to classify `∂C_T` for predicate sets.
pub const DEFAULT_BOUNDARY_RADIUS: f64 = 1e-8;

/// Which side of the threshold is forbidden.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `D = {x_axis ≤ threshold}`.
    Below,
    /// `D = {x_axis ≥ threshold}`.
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub axis: usize,
    pub threshold: f64,
    pub side: Side,
}

impl HalfSpace {
    pub fn new(axis: usize, threshold: f64, side: Side) -> Self {
        Self {
            axis,
            threshold,
            side,
        }
    }

    /// Signed distance to the barrier, positive on the allowed side.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self.side {
            Side::Below => x[self.axis] - self.threshold,
            Side::Above => self.threshold - x[self.axis],
        }
    }
}

type MembershipFn = dyn Fn(f64, &[f64]) -> bool + Send + Sync;

#[derive(Clone)]
pub enum ConstraintKind {
    Empty,
    /// `D = {T} × H`.
    TerminalHalfSpace(HalfSpace),
    /// `D = [0,T] × H`.
    RunningHalfSpace(HalfSpace),
    /// `D = {t₀} × [lower, upper]` (closed box).
    TimeSlab {
        t0: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// Arbitrary closed set given by a membership test.
    Predicate(Arc<MembershipFn>),
}

impl fmt::Debug for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => write!(f, "Empty"),
            Self::TerminalHalfSpace(h) => f.debug_tuple("TerminalHalfSpace").field(h).finish(),
            Self::RunningHalfSpace(h) => f.debug_tuple("RunningHalfSpace").field(h).finish(),
            Self::TimeSlab { t0, lower, upper } => f
                .debug_struct("TimeSlab")
                .field("t0", t0)
                .field("lower", lower)
                .field("upper", upper)
                .finish(),
            Self::Predicate(_) => write!(f, "Predicate(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KillMechanism {
    GridPoint,
    BridgeCrossing,
    /// The first point found in `D` is the final grid point.
    TerminalSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KillReport {
    pub killed: bool,
    pub kill_index: Option<usize>,
    pub kill_mechanism: Option<KillMechanism>,
}

impl KillReport {
    pub fn survived() -> Self {
        Self {
            killed: false,
            kill_index: None,
            kill_mechanism: None,
        }
    }

    pub fn at(index: usize, mechanism: KillMechanism) -> Self {
        Self {
            killed: true,
            kill_index: Some(index),
            kill_mechanism: Some(mechanism),
        }
    }
}

/// Partition of the terminal section `{T}×ℝᵈ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalClass {
    /// `C_T`
    Allowed,
    /// `D°_T = D_T ∖ cl(C_T)`
    ForbiddenInterior,
    /// `∂C_T = D_T ∩ cl(C_T)`, where `u` may jump.
    Boundary,
}

/// Probability that a Brownian bridge with variance rate `sigma_sq` between
/// two points at distances `d0, d1 > 0` from a flat barrier touches it
/// within `dt`.
pub fn bridge_crossing_probability(d0: f64, d1: f64, sigma_sq: f64, dt: f64) -> f64 {
    if d0 <= 0.0 || d1 <= 0.0 {
        return 1.0;
    }
    if sigma_sq <= 0.0 || dt <= 0.0 {
        return 0.0;
    }
    (-2.0 * d0 * d1 / (sigma_sq * dt)).exp()
}

#[derive(Clone)]
pub struct ConstraintSet {
    kind: ConstraintKind,
    dim: usize,
    horizon: f64,
    boundary_radius: f64,
}

impl fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstraintSet")
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl ConstraintSet {
    pub fn new(kind: ConstraintKind, dim: usize, horizon: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGeometry("dimension must be positive".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGeometry(format!("horizon must be positive, got {horizon}")));
        }
        match &kind {
            ConstraintKind::TerminalHalfSpace(h) | ConstraintKind::RunningHalfSpace(h) => {
                if h.axis >= dim {
                    return Err(Error::InvalidGeometry(format!(
                        "axis {} out of range for dimension {dim}",
                        h.axis
                    )));
                }
            }
            ConstraintKind::TimeSlab { t0, lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: lower.len().max(upper.len()),
                    });
                }
                if lower.iter().zip(upper).any(|(l, u)| l > u) {
                    return Err(Error::InvalidGeometry("slab box has lower > upper".into()));
                }
                if !(*t0 >= 0.0 && *t0 <= horizon) {
                    return Err(Error::InvalidGeometry(format!("slab time {t0} outside [0, {horizon}]")));
                }
            }
            ConstraintKind::Empty | ConstraintKind::Predicate(_) => {}
        }
        Ok(Self {
            kind,
            dim,
            horizon,
            boundary_radius: DEFAULT_BOUNDARY_RADIUS,
        })
    }

    pub fn empty(dim: usize, horizon: f64) -> Self {
        Self::new(ConstraintKind::Empty, dim, horizon).expect("valid empty set")
    }

    pub fn terminal_half_space(dim: usize, horizon: f64, half_space: HalfSpace) -> Result<Self> {
        Self::new(ConstraintKind::TerminalHalfSpace(half_space), dim, horizon)
    }

    pub fn running_half_space(dim: usize, horizon: f64, half_space: HalfSpace) -> Result<Self> {
        Self::new(ConstraintKind::RunningHalfSpace(half_space), dim, horizon)
    }

    pub fn time_slab(dim: usize, horizon: f64, t0: f64, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::new(ConstraintKind::TimeSlab { t0, lower, upper }, dim, horizon)
    }

    pub fn predicate<F>(dim: usize, horizon: f64, membership: F) -> Result<Self>
    where
        F: Fn(f64, &[f64]) -> bool + Send + Sync + 'static,
    {
        Self::new(ConstraintKind::Predicate(Arc::new(membership)), dim, horizon)
    }

    /// Radius used to detect `∂C_T` for predicate sets.
    pub fn with_boundary_radius(mut self, radius: f64) -> Self {
        self.boundary_radius = radius;
        self
    }

    pub fn kind(&self) -> &ConstraintKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_empty_set(&self) -> bool {
        matches!(self.kind, ConstraintKind::Empty)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Whether `(t, x) ∈ D`.
    pub fn contains(&self, t: f64, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        Ok(self.contains_unchecked(t, x))
    }

    pub(crate) fn contains_unchecked(&self, t: f64, x: &[f64]) -> bool {
        match &self.kind {
            ConstraintKind::Empty => false,
            ConstraintKind::TerminalHalfSpace(h) => {
                (t - self.horizon).abs() <= TIME_TOL && h.distance(x) <= 0.0
            }
            ConstraintKind::RunningHalfSpace(h) => h.distance(x) <= 0.0,
            ConstraintKind::TimeSlab { t0, lower, upper } => {
                (t - t0).abs() <= TIME_TOL && in_box(x, lower, upper)
            }
            ConstraintKind::Predicate(m) => m(t, x),
        }
    }

    /// Kill test for the grid step `(t0, x0) → (t1, x1)`, where the step ends
    /// at grid index `k1`, `last` says whether `k1` is the final index, and
    /// `sigma_sq` supplies the dispersion magnitude along a running barrier's
    /// axis at the start of the step.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn step_kill(
        &self,
        k1: usize,
        last: bool,
        (t0, x0): (f64, &[f64]),
        (t1, x1): (f64, &[f64]),
        sigma_sq: impl FnOnce() -> f64,
        stream: &NoiseStream,
        use_bridge: bool,
    ) -> Option<KillMechanism> {
        let grid_hit = match &self.kind {
            ConstraintKind::TimeSlab { t0: ts, lower, upper } => {
                if (t1 - ts).abs() <= TIME_TOL {
                    in_box(x1, lower, upper)
                } else if t0 + TIME_TOL < *ts && *ts < t1 {
                    let w = (ts - t0) / (t1 - t0);
                    x0.iter()
                        .zip(x1)
                        .zip(lower.iter().zip(upper))
                        .all(|((a, b), (l, u))| {
                            let xi = a + w * (b - a);
                            xi >= *l && xi <= *u
                        })
                } else {
                    false
                }
            }
            _ => self.contains_unchecked(t1, x1),
        };
        if grid_hit {
            return Some(if last {
                KillMechanism::TerminalSection
            } else {
                KillMechanism::GridPoint
            });
        }
        if use_bridge {
            if let ConstraintKind::RunningHalfSpace(h) = &self.kind {
                let p = bridge_crossing_probability(h.distance(x0), h.distance(x1), sigma_sq(), t1 - t0);
                if p > 0.0 && stream.bridge_uniform(k1 - 1) < p {
                    return Some(KillMechanism::BridgeCrossing);
                }
            }
        }
        None
    }

    /// First entry of a simulated path into `D`.
    pub fn detect_kill(
        &self,
        path: &PathSample,
        field: &dyn CoefficientField,
        stream: &NoiseStream,
        use_bridge: bool,
    ) -> Result<KillReport> {
        let grid = path.grid();
        let states = path.states();
        for s in states {
            self.check_dim(s)?;
        }
        let n = grid.n_steps();
        if self.contains_unchecked(grid.time(0), &states[0]) {
            let mech = if n == 0 {
                KillMechanism::TerminalSection
            } else {
                KillMechanism::GridPoint
            };
            return Ok(KillReport::at(0, mech));
        }
        let mut sigma = vec![0.0; field.dim_state() * field.dim_noise()];
        for k in 0..n {
            let (t0, t1) = (grid.time(k), grid.time(k + 1));
            let x0 = &states[k];
            let sigma_sq = || self.axis_variance(field, t0, x0, &mut sigma);
            if let Some(m) = self.step_kill(k + 1, k + 1 == n, (t0, x0), (t1, &states[k + 1]), sigma_sq, stream, use_bridge) {
                return Ok(KillReport::at(k + 1, m));
            }
        }
        Ok(KillReport::survived())
    }

    /// `Σ_j σ_{axis,j}²` at `(t, x)` for running half-spaces, else 0.
    pub(crate) fn axis_variance(&self, field: &dyn CoefficientField, t: f64, x: &[f64], buf: &mut [f64]) -> f64 {
        match &self.kind {
            ConstraintKind::RunningHalfSpace(h) => {
                field.dispersion(t, x, buf);
                axis_variance_from(buf, h.axis, field.dim_noise())
            }
            _ => 0.0,
        }
    }

    /// The barrier axis of a running half-space.
    pub(crate) fn running_axis(&self) -> Option<usize> {
        match &self.kind {
            ConstraintKind::RunningHalfSpace(h) => Some(h.axis),
            _ => None,
        }
    }

    /// Classify a terminal point `(T, x)`.
    pub fn classify_terminal(&self, x: &[f64]) -> Result<TerminalClass> {
        self.check_dim(x)?;
        let t = self.horizon;
        let class = match &self.kind {
            ConstraintKind::Empty => TerminalClass::Allowed,
            ConstraintKind::TerminalHalfSpace(h) | ConstraintKind::RunningHalfSpace(h) => {
                let d = h.distance(x);
                if d > 0.0 {
                    TerminalClass::Allowed
                } else if d == 0.0 {
                    TerminalClass::Boundary
                } else {
                    TerminalClass::ForbiddenInterior
                }
            }
            ConstraintKind::TimeSlab { t0, lower, upper } => {
                if (t - t0).abs() > TIME_TOL || !in_box(x, lower, upper) {
                    TerminalClass::Allowed
                } else if x.iter().zip(lower.iter().zip(upper)).any(|(xi, (l, u))| xi == l || xi == u) {
                    TerminalClass::Boundary
                } else {
                    TerminalClass::ForbiddenInterior
                }
            }
            ConstraintKind::Predicate(m) => {
                if !m(t, x) {
                    TerminalClass::Allowed
                } else {
                    let mut probe = x.to_vec();
                    let mut touches_c = false;
                    'outer: for i in 0..x.len() {
                        for sign in [-1.0, 1.0] {
                            probe[i] = x[i] + sign * self.boundary_radius;
                            if !m(t, &probe) {
                                touches_c = true;
                                break 'outer;
                            }
                        }
                        probe[i] = x[i];
                    }
                    if touches_c {
                        TerminalClass::Boundary
                    } else {
                        TerminalClass::ForbiddenInterior
                    }
                }
            }
        };
        Ok(class)
    }
}

pub(crate) fn axis_variance_from(sigma: &[f64], axis: usize, dim_noise: usize) -> f64 {
    sigma[axis * dim_noise..(axis + 1) * dim_noise]
        .iter()
        .map(|s| s * s)
        .sum()
}

fn in_box(x: &[f64], lower: &[f64], upper: &[f64]) -> bool {
    x.iter()
        .zip(lower.iter().zip(upper))
        .all(|(xi, (l, u))| xi >= l && xi <= u)
}
