//! Euler–Maruyama integration of the uncontrolled SDE
//! `dZ = μ dt + σ dW̄` and the controlled SDE `dX = (μ + σa) dt + σ dW`.
//!
//! Fixed steps only. Both integrators draw their increments from the same
//! [`NoiseStream`], so a controlled and an uncontrolled run with equal
//! `(master_seed, path_index)` are coupled (common random numbers).

mod field;
mod grid;
mod noise;

pub use field::{CoefficientField, ConstantField, FnField};
pub(crate) use field::{mat_t_vec, mat_vec};
pub use grid::TimeGrid;
pub(crate) use noise::derive_seed;
pub use noise::{NoiseStream, NormalSource};

use crate::error::{Error, Result};
use crate::estimator::CostFn;
use crate::geometry::{ConstraintSet, KillReport};
use crate::policy::FeedbackPolicy;

/// One simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    grid: TimeGrid,
    states: Vec<Vec<f64>>,
    killed: bool,
    kill_index: Option<usize>,
    running_cost_integral: f64,
    control_energy_integral: f64,
    clamp_activations: usize,
}

impl PathSample {
    /// Wrap precomputed states; panics unless there are `n_steps + 1` of them.
    pub fn from_states(grid: TimeGrid, states: Vec<Vec<f64>>) -> Self {
        assert_eq!(states.len(), grid.n_steps() + 1);
        Self {
            grid,
            states,
            killed: false,
            kill_index: None,
            running_cost_integral: 0.0,
            control_energy_integral: 0.0,
            clamp_activations: 0,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("non-empty path")
    }

    pub fn killed(&self) -> bool {
        self.killed
    }

    pub fn kill_index(&self) -> Option<usize> {
        self.kill_index
    }

    pub fn running_cost_integral(&self) -> f64 {
        self.running_cost_integral
    }

    pub fn control_energy_integral(&self) -> f64 {
        self.control_energy_integral
    }

    /// Number of steps at which the policy's clamp was active.
    pub fn clamp_activations(&self) -> usize {
        self.clamp_activations
    }

    /// Record the outcome of [`ConstraintSet::detect_kill`].
    pub fn apply_kill(&mut self, report: &KillReport) {
        self.killed = report.killed;
        self.kill_index = report.kill_index;
    }

    /// Left-rectangle `Σ f(t_k, x_k)·Δt_k` over the steps before the kill
    /// index (or all steps).
    pub fn accumulate_running_cost(&mut self, f: &CostFn) {
        let last = self.kill_index.unwrap_or(self.grid.n_steps());
        self.running_cost_integral = (0..last)
            .map(|k| f.eval(self.grid.time(k), &self.states[k]) * self.grid.step(k))
            .sum();
    }
}

/// What happened at one grid index during a [`walk`].
pub(crate) struct StepView<'s> {
    pub index: usize,
    pub time: f64,
    pub state: &'s [f64],
    pub running_cost: f64,
    pub killed: bool,
}

pub(crate) struct WalkSpec<'a> {
    pub field: &'a dyn CoefficientField,
    pub policy: Option<&'a FeedbackPolicy>,
    pub constraint: Option<&'a ConstraintSet>,
    pub use_bridge: bool,
    pub stop_on_kill: bool,
    pub running_cost: Option<&'a CostFn>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct WalkOutcome {
    pub kill: KillReport,
    pub running_cost: f64,
    pub control_energy: f64,
    pub clamp_activations: usize,
}

/// Euler–Maruyama workspace for one path.
pub(crate) struct EulerStepper<'a> {
    field: &'a dyn CoefficientField,
    policy: Option<&'a FeedbackPolicy>,
    normals: NormalSource,
    drift: Vec<f64>,
    sigma: Vec<f64>,
    dw: Vec<f64>,
    control: Vec<f64>,
    sigma_a: Vec<f64>,
    sigma_dw: Vec<f64>,
}

pub(crate) struct StepInfo {
    pub control_sq: f64,
    pub clamped: bool,
}

impl<'a> EulerStepper<'a> {
    pub fn new(field: &'a dyn CoefficientField, policy: Option<&'a FeedbackPolicy>, stream: &NoiseStream) -> Self {
        let (d, dn) = (field.dim_state(), field.dim_noise());
        Self {
            field,
            policy,
            normals: stream.normals(),
            drift: vec![0.0; d],
            sigma: vec![0.0; d * dn],
            dw: vec![0.0; dn],
            control: vec![0.0; dn],
            sigma_a: vec![0.0; d],
            sigma_dw: vec![0.0; d],
        }
    }

    /// Dispersion at the start of the most recent step.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn step(&mut self, t: f64, dt: f64, x: &mut [f64]) -> StepInfo {
        self.field.drift(t, x, &mut self.drift);
        self.field.dispersion(t, x, &mut self.sigma);
        let mut info = StepInfo {
            control_sq: 0.0,
            clamped: false,
        };
        if let Some(p) = self.policy {
            info.clamped = p.evaluate_into(t, x, &mut self.control);
            info.control_sq = self.control.iter().map(|a| a * a).sum();
            mat_vec(&self.sigma, &self.control, &mut self.sigma_a);
        }
        self.normals.fill(&mut self.dw, dt.sqrt());
        mat_vec(&self.sigma, &self.dw, &mut self.sigma_dw);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += (self.drift[i] + self.sigma_a[i]) * dt + self.sigma_dw[i];
        }
        info
    }
}

/// Integrate one path on `grid` from `x` (overwritten with the last visited
/// state), optionally detecting entry into a constraint set and accumulating
/// running cost and control energy.
pub(crate) fn walk(
    spec: &WalkSpec<'_>,
    grid: &TimeGrid,
    x: &mut [f64],
    stream: &NoiseStream,
    mut observe: impl FnMut(&StepView<'_>),
) -> Result<WalkOutcome> {
    let n = grid.n_steps();
    let mut stepper = EulerStepper::new(spec.field, spec.policy, stream);
    let mut out = WalkOutcome {
        kill: KillReport::survived(),
        running_cost: 0.0,
        control_energy: 0.0,
        clamp_activations: 0,
    };
    if let Some(c) = spec.constraint {
        if c.contains_unchecked(grid.time(0), x) {
            out.kill = KillReport::at(0, crate::geometry::KillMechanism::GridPoint);
        }
    }
    observe(&StepView {
        index: 0,
        time: grid.time(0),
        state: x,
        running_cost: 0.0,
        killed: out.kill.killed,
    });
    if out.kill.killed && spec.stop_on_kill {
        return Ok(out);
    }
    let mut prev = x.to_vec();
    let axis = spec.constraint.and_then(|c| c.running_axis());
    for k in 0..n {
        let (t0, t1) = (grid.time(k), grid.time(k + 1));
        let dt = t1 - t0;
        if let Some(f) = spec.running_cost {
            out.running_cost += f.eval(t0, x) * dt;
        }
        prev.copy_from_slice(x);
        let info = stepper.step(t0, dt, x);
        out.control_energy += info.control_sq * dt;
        out.clamp_activations += usize::from(info.clamped);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: k + 1 });
        }
        if let (Some(c), false) = (spec.constraint, out.kill.killed) {
            let sigma = stepper.sigma();
            let dn = spec.field.dim_noise();
            let sigma_sq = || axis.map_or(0.0, |a| crate::geometry::axis_variance_from(sigma, a, dn));
            if let Some(m) = c.step_kill(k + 1, k + 1 == n, (t0, &prev), (t1, x), sigma_sq, stream, spec.use_bridge) {
                out.kill = KillReport::at(k + 1, m);
            }
        }
        observe(&StepView {
            index: k + 1,
            time: t1,
            state: x,
            running_cost: out.running_cost,
            killed: out.kill.killed,
        });
        if out.kill.killed && spec.stop_on_kill {
            break;
        }
    }
    Ok(out)
}

fn check_start(field: &dyn CoefficientField, start_t: f64, x0: &[f64], grid: &TimeGrid) -> Result<()> {
    if x0.len() != field.dim_state() {
        return Err(Error::DimensionMismatch {
            expected: field.dim_state(),
            got: x0.len(),
        });
    }
    if (start_t - grid.t_start()).abs() > crate::geometry::TIME_TOL {
        return Err(Error::InvalidArgument(format!(
            "start time {start_t} does not match grid start {}",
            grid.t_start()
        )));
    }
    Ok(())
}

fn record_path(
    field: &dyn CoefficientField,
    policy: Option<&FeedbackPolicy>,
    start_t: f64,
    x0: &[f64],
    grid: &TimeGrid,
    stream: &NoiseStream,
) -> Result<PathSample> {
    check_start(field, start_t, x0, grid)?;
    let spec = WalkSpec {
        field,
        policy,
        constraint: None,
        use_bridge: false,
        stop_on_kill: false,
        running_cost: None,
    };
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    let mut x = x0.to_vec();
    let out = walk(&spec, grid, &mut x, stream, |v| states.push(v.state.to_vec()))?;
    let mut path = PathSample::from_states(*grid, states);
    path.control_energy_integral = out.control_energy;
    path.clamp_activations = out.clamp_activations;
    Ok(path)
}

/// Euler–Maruyama path of `Z` started at `(start_t, x0)`. Kill detection is
/// left to [`ConstraintSet::detect_kill`].
pub fn simulate_uncontrolled(
    field: &dyn CoefficientField,
    start_t: f64,
    x0: &[f64],
    grid: &TimeGrid,
    stream: &NoiseStream,
) -> Result<PathSample> {
    record_path(field, None, start_t, x0, grid, stream)
}

/// Euler–Maruyama path of `X` under a feedback policy, accumulating
/// `Σ |a_k|²·Δt_k`.
pub fn simulate_controlled(
    field: &dyn CoefficientField,
    policy: &FeedbackPolicy,
    start_t: f64,
    x0: &[f64],
    grid: &TimeGrid,
    stream: &NoiseStream,
) -> Result<PathSample> {
    if policy.dim_control() != field.dim_noise() {
        return Err(Error::DimensionMismatch {
            expected: field.dim_noise(),
            got: policy.dim_control(),
        });
    }
    record_path(field, Some(policy), start_t, x0, grid, stream)
}
