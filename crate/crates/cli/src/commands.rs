//! Subcommand implementations.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use statecon::verify::cost_of_policy;
use statecon::{
    estimate_u, simulate_controlled, Estimate, FeedbackPolicy, McConfig, NoiseStream, PolicySource, TimeGrid,
};

use crate::config::{ConfigError, ExperimentConfig, ProblemConfig, BUILTIN_NAMES};
use crate::expr::Expr;
use crate::output::{num, state_columns, Table};
use crate::problem::Problem;
use crate::suite::{run_check, Check};
use crate::{Cli, CliError, Command, CommonArgs, PointArgs};

/// Paths written by `simulate` unless `--paths` is given.
pub const SIMULATE_DEFAULT_PATHS: usize = 10;

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Times, comma separated; crossed with `--xs`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub times: Option<Vec<f64>>,
    /// One-dimensional states, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub xs: Option<Vec<f64>>,
    /// A point `t,x_1,…,x_d`; repeatable.
    #[arg(long = "point", allow_hyphen_values = true)]
    pub points: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    #[command(flatten)]
    pub point: PointArgs,
    /// `optimal`, `zero`, or one expression per control coordinate,
    /// comma separated.
    #[arg(long, default_value = "optimal", allow_hyphen_values = true)]
    pub control: String,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub check: Check,
    #[command(flatten)]
    pub point: PointArgs,
}

/// A finished run: the table plus anything that goes to `stderr`.
pub struct Outcome {
    pub table: Table,
    pub config_hash: String,
    pub timestamp: bool,
    pub out: Option<PathBuf>,
    pub notes: Vec<String>,
    /// Failed tolerances, one line each.
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn render(&self) -> String {
        self.table.render(&self.config_hash, self.timestamp)
    }

    pub fn write(&self, stdout: &mut dyn Write) -> Result<(), CliError> {
        let text = self.render();
        match &self.out {
            Some(path) => std::fs::write(path, text)?,
            None => stdout.write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

fn config_error(at: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(ConfigError::at(at, msg))
}

/// Config file (or built-in defaults) with command-line overrides applied.
pub fn resolve_config(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let named = |name: &str| {
        ProblemConfig::builtin(name).ok_or_else(|| {
            config_error("--problem", format!("unknown problem `{name}`; expected one of {}", BUILTIN_NAMES.join(", ")))
        })
    };
    let mut cfg = match (&common.config, &common.problem) {
        (Some(path), _) => ExperimentConfig::from_file(path).map_err(CliError::Config)?,
        (None, Some(name)) => ExperimentConfig::for_problem(named(name)?),
        (None, None) => return Err(config_error("arguments", "give --config or --problem")),
    };
    if let (Some(_), Some(name)) = (&common.config, &common.problem) {
        cfg.problem = named(name)?;
    }
    if let Some(s) = common.seed {
        cfg.mc.master_seed = s;
    }
    if let Some(n) = common.paths {
        cfg.mc.n_paths = n;
    }
    if let Some(dt) = common.dt {
        cfg.grid.dt = dt;
    }
    if common.no_bridge {
        cfg.mc.use_bridge = false;
    }
    if let Some(c) = common.clamp {
        cfg.policy.clamp_max = c;
    }
    if let Some(out) = &common.out {
        cfg.outputs.csv_path = Some(out.clone());
    }
    cfg.validate().map_err(|e| config_error(&format!("after command-line overrides, {}", e.location), e.message))?;
    Ok(cfg)
}

pub fn mc_config(cfg: &ExperimentConfig, common: &CommonArgs) -> McConfig {
    McConfig::new(cfg.mc.n_paths, cfg.grid.dt, cfg.mc.master_seed)
        .with_bridge(cfg.mc.use_bridge)
        .with_workers(common.workers)
}

fn resolve_point(args: &PointArgs, default: (f64, Vec<f64>), dim: usize) -> Result<(f64, Vec<f64>), CliError> {
    let t = args.t.unwrap_or(default.0);
    let x = args.x.clone().unwrap_or(default.1);
    if x.len() != dim {
        return Err(config_error("--x", format!("expected {dim} coordinates, got {}", x.len())));
    }
    Ok((t, x))
}

fn join(x: &[f64]) -> String {
    x.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";")
}

fn v_of(u: f64) -> f64 {
    if u > 0.0 {
        -2.0 * u.ln()
    } else {
        f64::INFINITY
    }
}

fn estimate_table(title: String, dim: usize) -> Table {
    let mut cols = vec![("t".to_string(), "time")];
    cols.extend(state_columns(dim));
    cols.extend([
        ("u_mean".to_string(), "1"),
        ("u_se".to_string(), "1"),
        ("v".to_string(), "cost"),
        ("n_paths".to_string(), "count"),
        ("seed".to_string(), "id"),
    ]);
    Table::new(title, cols)
}

fn estimate_row(t: f64, x: &[f64], est: &Estimate, seed: u64) -> Vec<String> {
    let mut row = vec![num(t)];
    row.extend(x.iter().map(|v| num(*v)));
    row.extend([
        num(est.mean),
        num(est.std_error),
        num(v_of(est.mean)),
        est.n_paths.to_string(),
        seed.to_string(),
    ]);
    row
}

/// Run the parsed command without writing anything.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = resolve_config(&cli.common)?;
    let problem = Problem::from_config(&cfg)?;
    let mc = mc_config(&cfg, &cli.common);
    let d = problem.dim();
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    let name = problem.name;

    let mut table = match &cli.command {
        Command::Estimate(args) => {
            let (t, x) = resolve_point(args, problem.figure_start(&cfg), d)?;
            let est = estimate_u(&problem.spec, t, &x, &mc)?;
            notes.extend(est.warning());
            let mut table = estimate_table(format!("estimate problem={name} t={} x={}", num(t), join(&x)), d);
            table.push(estimate_row(t, &x, &est, mc.master_seed));
            table
        }
        Command::Grid(args) => {
            let points = grid_points(args, &cfg, d)?;
            let mut table = estimate_table(format!("grid problem={name} points={}", points.len()), d);
            for (t, x) in &points {
                let est = estimate_u(&problem.spec, *t, x, &mc)?;
                notes.extend(est.warning());
                table.push(estimate_row(*t, x, &est, mc.master_seed));
            }
            table
        }
        Command::Simulate(args) => {
            let (t, x) = resolve_point(args, problem.figure_start(&cfg), d)?;
            let n = cli.common.paths.unwrap_or(SIMULATE_DEFAULT_PATHS);
            simulate(&problem, &cfg, &mc, t, &x, n)?
        }
        Command::Cost(args) => {
            let (t, x) = resolve_point(&args.point, problem.figure_start(&cfg), d)?;
            let policy = match args.control.as_str() {
                "optimal" => problem.optimal_policy(&cfg, &mc, t)?,
                "zero" => FeedbackPolicy::zero(problem.spec.field().dim_noise()),
                exprs => user_policy(exprs, d, problem.spec.field().dim_noise())?,
            };
            let mut report = cost_of_policy(&problem.spec, &policy, t, &x, &mc)?;
            if let Some(sol) = &problem.oracle {
                report = report.with_reference(sol.v(t, &x));
            }
            notes.extend(report.note());
            notes.extend(report.estimate.warning());
            let mut cols = vec![("control".to_string(), "label"), ("t".to_string(), "time")];
            cols.extend(state_columns(d));
            cols.extend([
                ("j_mean".to_string(), "cost"),
                ("j_se".to_string(), "cost"),
                ("v_ref".to_string(), "cost"),
                ("violation_fraction".to_string(), "1"),
                ("violations".to_string(), "count"),
                ("clamp_activations".to_string(), "count"),
                ("n_paths".to_string(), "count"),
                ("seed".to_string(), "id"),
            ]);
            let mut table = Table::new(
                format!("cost problem={name} t={} x={} control={}", num(t), join(&x), args.control),
                cols,
            );
            let mut row = vec![report.policy.clone(), num(t)];
            row.extend(x.iter().map(|v| num(*v)));
            row.extend([
                num(report.estimate.mean),
                num(report.estimate.std_error),
                report.reference_v.map(num).unwrap_or_default(),
                num(report.violation_fraction),
                report.violations.to_string(),
                report.clamp_activations.to_string(),
                report.estimate.n_paths.to_string(),
                mc.master_seed.to_string(),
            ]);
            table.push(row);
            table
        }
        Command::Verify(args) => {
            let start = match (&args.point.t, &args.point.x) {
                (None, None) => None,
                _ => Some(resolve_point(&args.point, problem.check_start(&cfg), d)?),
            };
            let rows = run_check(args.check, &problem, &cfg, &mc, start)?;
            let mut cols = vec![
                ("check".to_string(), "label"),
                ("quantity".to_string(), "label"),
                ("t".to_string(), "time"),
            ];
            cols.extend(state_columns(d));
            cols.extend([
                ("measured".to_string(), "per quantity"),
                ("lower".to_string(), "per quantity"),
                ("upper".to_string(), "per quantity"),
                ("pass".to_string(), "bool"),
            ]);
            let mut table = Table::new(format!("verify {} problem={name}", args.check.name()), cols);
            for r in &rows {
                let mut row = vec![r.check.to_string(), r.quantity.to_string(), num(r.t)];
                row.extend(r.x.iter().map(|v| num(*v)));
                row.extend([
                    num(r.measured),
                    r.lower.map(num).unwrap_or_default(),
                    r.upper.map(num).unwrap_or_default(),
                    r.passed().to_string(),
                ]);
                table.push(row);
                if !r.passed() {
                    failures.push(r.describe());
                }
            }
            table.summary("checks", rows.len().to_string());
            table.summary("failed", failures.len().to_string());
            table
        }
    };
    if let Some(fields) = &cfg.outputs.fields {
        table.select(fields).map_err(CliError::Config)?;
    }
    Ok(Outcome {
        table,
        config_hash: cfg.hash(),
        timestamp: !cli.common.no_timestamp,
        out: cfg.outputs.csv_path.clone(),
        notes,
        failures,
    })
}

fn grid_points(args: &GridArgs, cfg: &ExperimentConfig, d: usize) -> Result<Vec<(f64, Vec<f64>)>, CliError> {
    let mut points = Vec::new();
    for p in &args.points {
        let values = p
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| config_error("--point", format!("`{p}`: {e}")))?;
        if values.len() != d + 1 {
            return Err(config_error("--point", format!("`{p}` needs t and {d} coordinates")));
        }
        points.push((values[0], values[1..].to_vec()));
    }
    if !args.points.is_empty() && args.times.is_none() && args.xs.is_none() {
        return Ok(points);
    }
    if d != 1 {
        return Err(config_error("--xs", "use --point for problems with more than one dimension"));
    }
    let horizon = cfg.grid.horizon;
    let times = args.times.clone().unwrap_or_else(|| [0.0, 0.25, 0.5, 0.75].iter().map(|f| f * horizon).collect());
    let xs = args.xs.clone().unwrap_or_else(|| (0..9).map(|i| -2.0 + 0.5 * i as f64).collect());
    for t in &times {
        for x in &xs {
            points.push((*t, vec![*x]));
        }
    }
    Ok(points)
}

fn user_policy(text: &str, d: usize, dn: usize) -> Result<FeedbackPolicy, CliError> {
    let exprs = text
        .split(',')
        .map(|s| Expr::parse(s, d).map_err(|e| config_error("--control", e)))
        .collect::<Result<Vec<_>, _>>()?;
    if exprs.len() != dn {
        return Err(config_error("--control", format!("expected {dn} expressions, got {}", exprs.len())));
    }
    Ok(FeedbackPolicy::from_fn(dn, PolicySource::UserSupplied, move |t, x, out| {
        for (o, e) in out.iter_mut().zip(&exprs) {
            *o = e.eval(t, x);
        }
    }))
}

fn simulate(
    problem: &Problem,
    cfg: &ExperimentConfig,
    mc: &McConfig,
    t: f64,
    x: &[f64],
    n_paths: usize,
) -> Result<Table, CliError> {
    let d = problem.dim();
    if problem.spec.constraint().contains(t, x)? {
        return Err(CliError::from(statecon::Error::PointOutsideC { t, x: x.to_vec() }));
    }
    let policy = problem.optimal_policy(cfg, mc, t)?;
    let grid = TimeGrid::new(t, cfg.grid.horizon, cfg.grid.dt)?;
    let field = problem.spec.field();
    let mut cols = vec![("path_id".to_string(), "id"), ("t".to_string(), "time")];
    cols.extend(state_columns(d));
    let mut table = Table::new(
        format!("simulate problem={} t={} x={} paths={n_paths}", problem.name, num(t), join(x)),
        cols,
    );
    let (mut violations, mut clamps) = (0usize, 0u64);
    for i in 0..n_paths as u64 {
        let stream = NoiseStream::new(mc.master_seed, i);
        let path = simulate_controlled(field, &policy, t, x, &grid, &stream)?;
        if problem.spec.constraint().detect_kill(&path, field, &stream, false)?.killed {
            violations += 1;
        }
        clamps += path.clamp_activations() as u64;
        for (k, s) in path.states().iter().enumerate() {
            let mut row = vec![i.to_string(), num(grid.time(k))];
            row.extend(s.iter().map(|v| num(*v)));
            table.push(row);
        }
    }
    table.summary("paths", n_paths.to_string());
    table.summary("violations", violations.to_string());
    table.summary("violation_fraction", num(violations as f64 / n_paths.max(1) as f64));
    table.summary("clamp_activations", clamps.to_string());
    table.summary("seed", mc.master_seed.to_string());
    Ok(table)
}
