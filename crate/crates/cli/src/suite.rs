//! Named check suites behind `statecon verify`, with their tolerances.

use statecon::verify::{
    hjb_residual, htransform_law_check, pde_residual_u, theta_martingale_check, LawCheckConfig, ResidualReport,
};
use statecon::{McConfig, UFunction};

use crate::config::{ExperimentConfig, ProblemConfig};
use crate::problem::Problem;
use crate::CliError;

/// Difference step of the residual checks.
pub const RESIDUAL_STEP: f64 = 1e-4;
pub const RESIDUAL_BOUND: f64 = 1e-3;
/// Coarse step of the convergence-order check; the fine step is half of it.
pub const RATIO_STEP: f64 = 1e-2;
pub const RATIO_RANGE: (f64, f64) = (3.5, 4.5);
/// Residuals below this at the fine step count as exact and skip the ratio.
pub const RATIO_FLOOR: f64 = 1e-11;
/// Standard errors allowed between a martingale estimate and `u`.
pub const THETA_Z: f64 = 4.0;
/// Checkpoints as fractions of the remaining time.
pub const CHECKPOINT_FRACTIONS: [f64; 3] = [0.25, 0.5, 0.75];
/// Law-check time as a fraction of the remaining time.
pub const LAW_TIME_FRACTION: f64 = 0.5;
/// Points per axis of the residual lattice.
pub const LATTICE_SIZE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Check {
    Hjb,
    Pde,
    Theta,
    Htransform,
    All,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Hjb => "hjb",
            Check::Pde => "pde",
            Check::Theta => "theta",
            Check::Htransform => "htransform",
            Check::All => "all",
        }
    }
}

/// One measured quantity against its bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: &'static str,
    pub quantity: &'static str,
    pub t: f64,
    pub x: Vec<f64>,
    pub measured: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.measured.is_finite()
            && self.lower.is_none_or(|l| self.measured >= l)
            && self.upper.is_none_or(|u| self.measured <= u)
    }

    pub fn describe(&self) -> String {
        let bound = match (self.lower, self.upper) {
            (Some(l), Some(u)) => format!("[{l}, {u}]"),
            (Some(l), None) => format!(">= {l}"),
            (None, Some(u)) => format!("<= {u}"),
            (None, None) => "unbounded".into(),
        };
        format!(
            "{} {} at t={} x={:?}: measured {} vs bound {}",
            self.check, self.quantity, self.t, self.x, self.measured, bound
        )
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Interior `5×5` lattice where the closed form is smooth and `u` is
/// bounded away from 0.
pub fn residual_lattice(cfg: &ExperimentConfig, dim: usize) -> Vec<(f64, Vec<f64>)> {
    let horizon = cfg.grid.horizon;
    let root = horizon.sqrt();
    let (ts, xs) = match &cfg.problem {
        ProblemConfig::Example1 => (linspace(0.1, 0.7, LATTICE_SIZE), linspace(-0.9 * root, 1.1 * root, LATTICE_SIZE)),
        ProblemConfig::Example2 => (linspace(0.1, 0.7, LATTICE_SIZE), linspace(0.4 * root, 1.6 * root, LATTICE_SIZE)),
        ProblemConfig::Example3 { t0, x0, x1 } => {
            let w = x1 - x0;
            let ts = linspace(0.1 * t0 / horizon, 0.5 * t0 / horizon, LATTICE_SIZE);
            (ts, linspace(x0 + 0.175 * w, x0 + 0.925 * w, LATTICE_SIZE))
        }
        _ => (linspace(0.1, 0.7, LATTICE_SIZE), linspace(-root, root, LATTICE_SIZE)),
    };
    ts.iter()
        .flat_map(|s| xs.iter().map(move |x| (s * horizon, vec![*x; dim])))
        .collect()
}

type ResidualFn<'a> = dyn Fn((f64, &[f64]), f64) -> statecon::Result<ResidualReport> + 'a;

fn residual_rows(
    check: &'static str,
    problem: &Problem,
    cfg: &ExperimentConfig,
    residual: &ResidualFn<'_>,
) -> Result<Vec<CheckRow>, CliError> {
    let (q_res, q_ratio) = match check {
        "hjb" => ("hjb_residual", "hjb_ratio"),
        _ => ("pde_residual", "pde_ratio"),
    };
    let mut rows = Vec::new();
    for (t, x) in residual_lattice(cfg, problem.dim()) {
        let fine = residual((t, &x), RESIDUAL_STEP)?;
        rows.push(CheckRow {
            check,
            quantity: q_res,
            t,
            x: x.clone(),
            measured: fine.residual.abs(),
            lower: None,
            upper: Some(RESIDUAL_BOUND),
        });
        let coarse = residual((t, &x), RATIO_STEP)?.residual.abs();
        let half = residual((t, &x), 0.5 * RATIO_STEP)?.residual.abs();
        if half > RATIO_FLOOR {
            rows.push(CheckRow {
                check,
                quantity: q_ratio,
                t,
                x,
                measured: coarse / half,
                lower: Some(RATIO_RANGE.0),
                upper: Some(RATIO_RANGE.1),
            });
        }
    }
    Ok(rows)
}

/// Run one suite (or all) and return every measured row.
pub fn run_check(
    check: Check,
    problem: &Problem,
    cfg: &ExperimentConfig,
    mc: &McConfig,
    start: Option<(f64, Vec<f64>)>,
) -> Result<Vec<CheckRow>, CliError> {
    let (t, x) = start.unwrap_or_else(|| problem.check_start(cfg));
    let horizon = cfg.grid.horizon;
    let needs_closed = || {
        problem.oracle.clone().ok_or_else(|| {
            CliError::Config(crate::config::ConfigError::at(
                "problem",
                format!("the {} check needs a closed-form solution", check.name()),
            ))
        })
    };
    match check {
        Check::All => {
            let mut rows = Vec::new();
            for c in [Check::Hjb, Check::Pde, Check::Theta, Check::Htransform] {
                rows.extend(run_check(c, problem, cfg, mc, Some((t, x.clone())))?);
            }
            Ok(rows)
        }
        Check::Hjb => {
            let sol = needs_closed()?;
            let v = sol.value_function();
            let field = sol.field();
            let running = problem.spec.costs().running.clone();
            residual_rows("hjb", problem, cfg, &|p, h| hjb_residual(&v, field.as_ref(), &running, horizon, p, h, h))
        }
        Check::Pde => {
            let sol = needs_closed()?;
            let field = sol.field();
            let running = problem.spec.costs().running.clone();
            residual_rows("pde", problem, cfg, &|p, h| pde_residual_u(sol.as_ref(), field.as_ref(), &running, p, h, h))
        }
        Check::Theta => {
            let u = problem.u_oracle(cfg, mc, t)?;
            let checkpoints: Vec<f64> = CHECKPOINT_FRACTIONS.iter().map(|f| t + f * (horizon - t)).collect();
            let report = theta_martingale_check(&problem.spec, Some(u.as_ref() as &dyn UFunction), t, &x, &checkpoints, mc)?;
            let mut rows: Vec<CheckRow> = report
                .checkpoints
                .iter()
                .map(|c| {
                    let band = THETA_Z * c.estimate.std_error;
                    CheckRow {
                        check: "theta",
                        quantity: "theta_mean",
                        t: c.time,
                        x: x.clone(),
                        measured: c.estimate.mean,
                        lower: Some(report.target - band),
                        upper: Some(report.target + band),
                    }
                })
                .collect();
            rows.push(CheckRow {
                check: "theta",
                quantity: "theta_pairwise_z",
                t,
                x,
                measured: report.max_pairwise_z(),
                lower: None,
                upper: Some(THETA_Z),
            });
            Ok(rows)
        }
        Check::Htransform => {
            let u = problem.u_oracle(cfg, mc, t)?;
            let policy = problem.optimal_policy(cfg, mc, t)?;
            let law = LawCheckConfig::default();
            let s = t + LAW_TIME_FRACTION * (horizon - t);
            let r = htransform_law_check(&problem.spec, u.as_ref(), &policy, t, &x, s, mc, &law)?;
            Ok(vec![
                CheckRow {
                    check: "htransform",
                    quantity: "ks_distance",
                    t: r.s,
                    x: x.clone(),
                    measured: r.ks,
                    lower: None,
                    upper: Some(r.threshold),
                },
                CheckRow {
                    check: "htransform",
                    quantity: "effective_sample_size",
                    t: r.s,
                    x,
                    measured: r.effective_sample_size,
                    lower: Some(law.min_ess),
                    upper: None,
                },
            ])
        }
    }
}
