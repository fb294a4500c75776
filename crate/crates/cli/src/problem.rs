//! Turning a config into a problem, a policy and a `u` oracle.

use std::sync::Arc;

use statecon::oracles::{unconstrained_case, UnconstrainedCase};
use statecon::policy::{alpha_star_mc, McPolicyConfig};
use statecon::{
    clamp, ClosedFormSolution, ConstantField, ConstraintSet, CostFn, CostSpec, FeedbackPolicy, FnField, HalfSpace,
    McConfig, ProblemSpec, Side, UFunction,
};

use crate::config::{validate_inline, ConfigError, ConstraintConfig, ExperimentConfig, ProblemConfig, SideConfig};
use crate::expr::Expr;
use crate::CliError;

/// A resolved problem.
pub struct Problem {
    pub name: &'static str,
    pub spec: ProblemSpec,
    /// Closed-form solution, if the problem has one.
    pub oracle: Option<Arc<ClosedFormSolution>>,
}

impl Problem {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let horizon = cfg.grid.horizon;
        let geometry = |e: statecon::Error| CliError::Config(ConfigError::at("problem", e));
        let closed = |sol: ClosedFormSolution| Self {
            name: sol.name(),
            spec: sol.problem(),
            oracle: Some(Arc::new(sol)),
        };
        Ok(match &cfg.problem {
            ProblemConfig::Example1 => closed(ClosedFormSolution::example1(horizon).map_err(geometry)?),
            ProblemConfig::Example2 => closed(ClosedFormSolution::example2(horizon).map_err(geometry)?),
            ProblemConfig::Example3 { t0, x0, x1 } => {
                closed(ClosedFormSolution::example3(horizon, *t0, *x0, *x1).map_err(geometry)?)
            }
            ProblemConfig::Unconstrained {
                dim,
                running_cost,
                terminal_cost,
            } => closed(
                ClosedFormSolution::unconstrained(
                    Arc::new(ConstantField::brownian(*dim)),
                    horizon,
                    *running_cost,
                    *terminal_cost,
                )
                .map_err(geometry)?,
            ),
            ProblemConfig::Inline(p) => {
                let exprs = validate_inline(p).map_err(CliError::Config)?;
                let (d, dn) = (p.dim, p.noise_dim());
                let drift = exprs.drift;
                let dispersion = exprs.dispersion;
                let field = FnField::new(
                    d,
                    dn,
                    move |t, x, out| {
                        for (o, e) in out.iter_mut().zip(&drift) {
                            *o = e.eval(t, x);
                        }
                    },
                    move |t, x, out| {
                        for (o, e) in out.iter_mut().zip(&dispersion) {
                            *o = e.eval(t, x);
                        }
                    },
                );
                let side = |s: &SideConfig| match s {
                    SideConfig::Below => Side::Below,
                    SideConfig::Above => Side::Above,
                };
                let constraint = match &p.constraint {
                    ConstraintConfig::Empty => Ok(ConstraintSet::empty(d, horizon)),
                    ConstraintConfig::TerminalHalfSpace { axis, threshold, side: s } => {
                        ConstraintSet::terminal_half_space(d, horizon, HalfSpace::new(axis - 1, *threshold, side(s)))
                    }
                    ConstraintConfig::RunningHalfSpace { axis, threshold, side: s } => {
                        ConstraintSet::running_half_space(d, horizon, HalfSpace::new(axis - 1, *threshold, side(s)))
                    }
                    ConstraintConfig::TimeSlab { t0, lower, upper } => {
                        ConstraintSet::time_slab(d, horizon, *t0, lower.clone(), upper.clone())
                    }
                    ConstraintConfig::Predicate { .. } => {
                        let e = exprs.predicate.expect("predicate parsed");
                        ConstraintSet::predicate(d, horizon, move |t, x| e.eval(t, x) <= 0.0)
                    }
                }
                .map_err(|e| CliError::Config(ConfigError::at("problem.constraint", e)))?;
                let costs = CostSpec {
                    running: cost_fn(exprs.running_cost),
                    terminal: cost_fn(exprs.terminal_cost),
                };
                let spec = ProblemSpec::new(Arc::new(field), constraint, costs, horizon).map_err(geometry)?;
                let oracle = match unconstrained_case(&spec) {
                    Ok(UnconstrainedCase::Closed(sol)) => Some(Arc::new(sol)),
                    _ => None,
                };
                Self {
                    name: "inline",
                    spec,
                    oracle,
                }
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Starting point of the published trajectory plots, or the origin.
    pub fn figure_start(&self, cfg: &ExperimentConfig) -> (f64, Vec<f64>) {
        let x = match &cfg.problem {
            ProblemConfig::Example1 => -1.5,
            ProblemConfig::Example2 => 0.2,
            _ => 0.0,
        };
        (0.0, vec![x; self.dim()])
    }

    /// Starting point for the martingale and law checks: where `u` is
    /// neither close to 0 nor to 1.
    pub fn check_start(&self, cfg: &ExperimentConfig) -> (f64, Vec<f64>) {
        let root_t = cfg.grid.horizon.sqrt();
        let x = match &cfg.problem {
            ProblemConfig::Example1 => 0.5 * root_t,
            ProblemConfig::Example2 => root_t,
            ProblemConfig::Example3 { t0, x1, .. } => x1 + 0.5 * t0.sqrt(),
            _ => 0.0,
        };
        (0.0, vec![x; self.dim()])
    }

    /// The optimal feedback clamped at `policy.clamp_max`. Problems without
    /// a closed form use the Monte Carlo lattice policy, which needs
    /// `policy.lattice`.
    pub fn optimal_policy(&self, cfg: &ExperimentConfig, mc: &McConfig, t_start: f64) -> Result<FeedbackPolicy, CliError> {
        if let Some(sol) = &self.oracle {
            return Ok(clamp(&sol.policy(), cfg.policy.clamp_max));
        }
        let lattice = self.lattice_policy(cfg, mc, t_start)?;
        Ok(lattice.policy())
    }

    /// `u` from the closed form, or tabulated on the lattice.
    pub fn u_oracle(&self, cfg: &ExperimentConfig, mc: &McConfig, t_start: f64) -> Result<Arc<dyn UFunction>, CliError> {
        if let Some(sol) = &self.oracle {
            return Ok(sol.clone());
        }
        let lattice = self.lattice_policy(cfg, mc, t_start)?;
        Ok(Arc::new(lattice.tabulated_u()))
    }

    fn lattice_policy(
        &self,
        cfg: &ExperimentConfig,
        mc: &McConfig,
        t_start: f64,
    ) -> Result<Arc<statecon::policy::McPolicy>, CliError> {
        let lattice = cfg.policy.lattice.as_ref().ok_or_else(|| {
            CliError::Config(ConfigError::at(
                "policy.lattice",
                "required for problems without a closed-form solution",
            ))
        })?;
        let mut lattice_mc = *mc;
        if let Some(n) = lattice.n_paths {
            lattice_mc.n_paths = n;
        }
        let mut pc = McPolicyConfig::new(lattice_mc, t_start, lattice.x_lower.clone(), lattice.x_upper.clone());
        pc.t_spacing = lattice.t_spacing;
        pc.x_spacing = lattice.x_spacing;
        pc.u_floor = cfg.policy.u_floor;
        pc.clamp_max = cfg.policy.clamp_max;
        pc.fd_step = cfg.policy.fd_step.map(|h| vec![h; self.dim()]);
        let policy = alpha_star_mc(&self.spec, pc).map_err(CliError::from)?;
        Ok(Arc::new(policy))
    }
}

fn cost_fn(e: Expr) -> CostFn {
    match e.constant_value() {
        Some(0.0) => CostFn::Zero,
        Some(c) => CostFn::Constant(c),
        None => CostFn::custom(move |t, x| e.eval(t, x)),
    }
}
