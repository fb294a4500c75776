//! Monte Carlo feedback memoised on a rectangular `(t, x)` lattice.
//!
//! The lattice is filled once, node by node, from [`estimate_u`] and
//! [`estimate_grad_u`]; afterwards evaluation is read-only multilinear
//! interpolation. Points outside the lattice use the nearest boundary node.

use std::sync::Arc;

use crate::dynamics::mat_t_vec;
use crate::error::{Error, Result};
use crate::estimator::{estimate_grad_u, estimate_u, Estimate, McConfig, ProblemSpec};
use crate::geometry::TIME_TOL;

use super::{FeedbackPolicy, PolicySource, UFunction, DEFAULT_CLAMP_MAX, DEFAULT_U_FLOOR};

#[derive(Debug, Clone, PartialEq)]
pub struct McPolicyConfig {
    pub mc: McConfig,
    /// First lattice time; the last is the horizon.
    pub t_start: f64,
    /// Defaults to `mc.dt`.
    pub t_spacing: Option<f64>,
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    /// Defaults to `0.05·√(T − t_start)`.
    pub x_spacing: Option<f64>,
    pub u_floor: f64,
    /// Finite-difference steps; `None` uses the estimator default.
    pub fd_step: Option<Vec<f64>>,
    pub clamp_max: f64,
}

impl McPolicyConfig {
    pub fn new(mc: McConfig, t_start: f64, x_lower: Vec<f64>, x_upper: Vec<f64>) -> Self {
        Self {
            mc,
            t_start,
            t_spacing: None,
            x_lower,
            x_upper,
            x_spacing: None,
            u_floor: DEFAULT_U_FLOOR,
            fd_step: None,
            clamp_max: DEFAULT_CLAMP_MAX,
        }
    }
}

/// The Monte Carlo control at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct McControl {
    pub control: Vec<f64>,
    /// Delta-method standard error per coordinate, ignoring the covariance
    /// of `û` and `∇û`.
    pub std_error: Vec<f64>,
    pub u: Estimate,
    /// `∇û`, zero when degenerate.
    pub gradient: Vec<f64>,
    /// `û` fell below the floor and the control was set to zero.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
struct Node {
    u: f64,
    grad: Vec<f64>,
    alpha: Vec<f64>,
    degenerate: bool,
}

fn axis(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let n = (((hi - lo) / spacing) - 1e-9).ceil().max(1.0) as usize;
    (0..=n).map(|k| if k == n { hi } else { lo + k as f64 * spacing }).collect()
}

/// Lower index and weight of `v` on a sorted axis, clamped to the ends.
fn locate(axis: &[f64], v: f64) -> (usize, f64) {
    if axis.len() == 1 || v <= axis[0] {
        return (0, 0.0);
    }
    let last = axis.len() - 1;
    if v >= axis[last] {
        return (last - 1, 1.0);
    }
    let i = axis.partition_point(|a| *a <= v) - 1;
    (i, (v - axis[i]) / (axis[i + 1] - axis[i]))
}

/// A Monte Carlo feedback policy and the `û` table it was built from.
pub struct McPolicy {
    problem: ProblemSpec,
    config: McPolicyConfig,
    axes: Vec<Vec<f64>>,
    nodes: Vec<Node>,
}

impl std::fmt::Debug for McPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("McPolicy")
            .field("config", &self.config)
            .field("lattice_shape", &self.axes.iter().map(Vec::len).collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

/// Build the lattice policy for `problem`.
pub fn alpha_star_mc(problem: &ProblemSpec, config: McPolicyConfig) -> Result<McPolicy> {
    let d = problem.dim();
    let horizon = problem.horizon();
    if config.x_lower.len() != d || config.x_upper.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: config.x_lower.len().max(config.x_upper.len()),
        });
    }
    if config.x_lower.iter().zip(&config.x_upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::InvalidArgument("lattice box has lower > upper".into()));
    }
    if !(config.t_start >= 0.0 && config.t_start < horizon) {
        return Err(Error::InvalidArgument(format!("lattice start {} outside [0, T)", config.t_start)));
    }
    if !(config.u_floor >= 0.0) || !(config.clamp_max > 0.0) {
        return Err(Error::InvalidArgument("u_floor must be ≥ 0 and clamp_max > 0".into()));
    }
    let t_spacing = config.t_spacing.unwrap_or(config.mc.dt);
    let x_spacing = config.x_spacing.unwrap_or(0.05 * (horizon - config.t_start).sqrt());
    if !(t_spacing > 0.0 && x_spacing > 0.0) {
        return Err(Error::InvalidArgument("lattice spacings must be positive".into()));
    }
    let mut axes = vec![axis(config.t_start, horizon, t_spacing)];
    for i in 0..d {
        if config.x_lower[i] == config.x_upper[i] {
            axes.push(vec![config.x_lower[i]]);
        } else {
            axes.push(axis(config.x_lower[i], config.x_upper[i], x_spacing));
        }
    }
    let mut policy = McPolicy {
        problem: problem.clone(),
        config,
        axes,
        nodes: Vec::new(),
    };
    let n_nodes: usize = policy.axes.iter().map(Vec::len).product();
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut point = vec![0.0; d];
    for flat in 0..n_nodes {
        let t = policy.node_coords(flat, &mut point);
        nodes.push(policy.build_node(t, &point)?);
    }
    policy.nodes = nodes;
    Ok(policy)
}

impl McPolicy {
    fn node_coords(&self, mut flat: usize, x: &mut [f64]) -> f64 {
        // last axis varies fastest
        for k in (1..self.axes.len()).rev() {
            let n = self.axes[k].len();
            x[k - 1] = self.axes[k][flat % n];
            flat /= n;
        }
        self.axes[0][flat]
    }

    fn build_node(&self, t: f64, x: &[f64]) -> Result<Node> {
        let d = self.problem.dim();
        let dn = self.problem.field().dim_noise();
        let zero = |u: f64, degenerate: bool| Node {
            u,
            grad: vec![0.0; d],
            alpha: vec![0.0; dn],
            degenerate,
        };
        if t >= self.problem.horizon() - TIME_TOL {
            return Ok(zero(self.problem.terminal_value(x), false));
        }
        if self.problem.constraint().contains_unchecked(t, x) {
            return Ok(zero(0.0, false));
        }
        match self.evaluate_point(t, x) {
            Ok(c) => Ok(Node {
                u: c.u.mean,
                grad: c.gradient,
                alpha: c.control,
                degenerate: c.degenerate,
            }),
            // a difference probe reaches into D: too close to the boundary
            // for a central difference at this step
            Err(Error::PointOutsideC { .. }) => {
                let u = estimate_u(&self.problem, t, x, &self.config.mc)?;
                Ok(zero(u.mean, true))
            }
            Err(e) => Err(e),
        }
    }

    /// Fresh Monte Carlo control at `(t, x)`, bypassing the lattice.
    pub fn evaluate_point(&self, t: f64, x: &[f64]) -> Result<McControl> {
        mc_control(&self.problem, t, x, &self.config)
    }

    pub fn lattice_shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Number of lattice nodes where `û` fell below the floor or the
    /// difference stencil did not fit in `C`.
    pub fn degenerate_nodes(&self) -> usize {
        self.nodes.iter().filter(|n| n.degenerate).count()
    }

    fn interpolate(&self, t: f64, x: &[f64], value: impl Fn(&Node, &mut [f64]), out: &mut [f64]) {
        let dims = self.axes.len();
        let loc: Vec<(usize, f64)> = std::iter::once(t)
            .chain(x.iter().copied())
            .zip(&self.axes)
            .map(|(v, a)| locate(a, v))
            .collect();
        out.fill(0.0);
        let mut buf = vec![0.0; out.len()];
        for corner in 0..(1usize << dims) {
            let mut weight = 1.0;
            let mut flat = 0;
            for (k, (i, w)) in loc.iter().enumerate() {
                let up = (corner >> k) & 1 == 1;
                let n = self.axes[k].len();
                let idx = if up { (i + 1).min(n - 1) } else { *i };
                weight *= if up { *w } else { 1.0 - w };
                flat = flat * n + idx;
            }
            if weight == 0.0 {
                continue;
            }
            value(&self.nodes[flat], &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += weight * b;
            }
        }
    }

    /// The interpolated control as a clamped [`FeedbackPolicy`]; zero on
    /// `D` and for `t ≥ T`.
    pub fn policy(self: &Arc<Self>) -> FeedbackPolicy {
        let me = self.clone();
        let p = FeedbackPolicy::from_fn(self.problem.field().dim_noise(), PolicySource::MonteCarloFD, move |t, x, out| {
            if t >= me.problem.horizon() - TIME_TOL || me.problem.constraint().contains_unchecked(t, x) {
                out.fill(0.0);
                return;
            }
            me.interpolate(t, x, |n, b| b.copy_from_slice(&n.alpha), out);
        });
        super::clamp(&p, self.config.clamp_max)
    }

    /// The tabulated `û` and `∇û`.
    pub fn tabulated_u(self: &Arc<Self>) -> TabulatedU {
        TabulatedU { table: self.clone() }
    }
}

fn mc_control(problem: &ProblemSpec, t: f64, x: &[f64], config: &McPolicyConfig) -> Result<McControl> {
    let dn = problem.field().dim_noise();
    let d = problem.dim();
    let u = estimate_u(problem, t, x, &config.mc)?;
    if !(u.mean >= config.u_floor) || u.mean == 0.0 {
        return Ok(McControl {
            control: vec![0.0; dn],
            std_error: vec![0.0; dn],
            u,
            gradient: vec![0.0; d],
            degenerate: true,
        });
    }
    let grad = estimate_grad_u(problem, t, x, config.fd_step.as_deref(), &config.mc)?;
    let mut sigma = vec![0.0; d * dn];
    problem.field().dispersion(t, x, &mut sigma);
    let ratio: Vec<f64> = grad.gradient.iter().map(|g| g / u.mean).collect();
    let mut control = vec![0.0; dn];
    mat_t_vec(&sigma, &ratio, &mut control);
    let ratio_var: Vec<f64> = grad
        .gradient
        .iter()
        .zip(&grad.std_error)
        .map(|(g, se)| (se / u.mean).powi(2) + (g * u.std_error / (u.mean * u.mean)).powi(2))
        .collect();
    let std_error = (0..dn)
        .map(|j| {
            (0..d)
                .map(|i| sigma[i * dn + j].powi(2) * ratio_var[i])
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(McControl {
        control,
        std_error,
        u,
        gradient: grad.gradient,
        degenerate: false,
    })
}

/// `û` and `∇û` interpolated from an [`McPolicy`] lattice.
#[derive(Clone)]
pub struct TabulatedU {
    table: Arc<McPolicy>,
}

impl UFunction for TabulatedU {
    fn dim(&self) -> usize {
        self.table.problem.dim()
    }

    fn horizon(&self) -> f64 {
        self.table.problem.horizon()
    }

    fn u(&self, t: f64, x: &[f64]) -> f64 {
        let p = &self.table.problem;
        if t >= p.horizon() - TIME_TOL {
            return p.terminal_value(x);
        }
        if p.constraint().contains_unchecked(t, x) {
            return 0.0;
        }
        let mut out = [0.0];
        self.table.interpolate(t, x, |n, b| b[0] = n.u, &mut out);
        out[0]
    }

    fn grad_u(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.table.interpolate(t, x, |n, b| b.copy_from_slice(&n.grad), out);
    }
}

impl std::fmt::Debug for TabulatedU {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TabulatedU").field("table", &self.table).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ConstantField;
    use crate::estimator::CostSpec;
    use crate::geometry::ConstraintSet;

    #[test]
    fn axis_includes_both_ends() {
        assert_eq!(axis(0.0, 1.0, 0.5), vec![0.0, 0.5, 1.0]);
        let a = axis(0.0, 1.0, 0.3);
        assert_eq!(a.len(), 5);
        assert_eq!(*a.last().unwrap(), 1.0);
    }

    #[test]
    fn locate_clamps() {
        let a = [0.0, 1.0, 2.0];
        assert_eq!(locate(&a, -1.0), (0, 0.0));
        assert_eq!(locate(&a, 3.0), (1, 1.0));
        assert_eq!(locate(&a, 1.5), (1, 0.5));
        assert_eq!(locate(&[4.0], 9.0), (0, 0.0));
    }

    #[test]
    fn unconstrained_policy_is_zero() {
        let p = ProblemSpec::new(
            Arc::new(ConstantField::brownian(1)),
            ConstraintSet::empty(1, 1.0),
            CostSpec::zero(),
            1.0,
        )
        .unwrap();
        let mut cfg = McPolicyConfig::new(McConfig::new(200, 0.1, 3), 0.0, vec![-1.0], vec![1.0]);
        cfg.t_spacing = Some(0.5);
        cfg.x_spacing = Some(0.5);
        let mc = Arc::new(alpha_star_mc(&p, cfg).unwrap());
        assert_eq!(mc.lattice_shape(), vec![3, 5]);
        assert_eq!(mc.policy().evaluate(0.3, &[0.2]), vec![0.0]);
        assert_eq!(mc.tabulated_u().u(0.3, &[0.2]), 1.0);
        assert_eq!(mc.degenerate_nodes(), 0);
    }

    #[test]
    fn floor_gives_flagged_zero() {
        let c = ConstraintSet::terminal_half_space(1, 1.0, crate::geometry::HalfSpace::new(0, 0.0, crate::geometry::Side::Below))
            .unwrap();
        let p = ProblemSpec::new(Arc::new(ConstantField::brownian(1)), c, CostSpec::zero(), 1.0).unwrap();
        let cfg = McPolicyConfig::new(McConfig::new(1000, 0.01, 3), 0.0, vec![-1.0], vec![1.0]);
        // u(0.9, −5) = Φ(−5/√0.1) ≈ 1e-56, far below the floor
        let c = mc_control(&p, 0.9, &[-5.0], &cfg).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.control, vec![0.0]);
    }
}
