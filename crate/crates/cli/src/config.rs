//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "problem": "example2",
//!   "grid": { "T": 1.0, "dt": 0.005 },
//!   "mc": { "n_paths": 100000, "master_seed": 42 },
//!   "policy": { "clamp_max": 1e4, "u_floor": 1e-6 },
//!   "outputs": { "csv_path": "out.csv", "fields": ["t", "x_1", "u_mean"] }
//! }
//! ```
//!
//! `problem` is either a built-in name or an object with a `kind` tag;
//! `"kind": "inline"` takes coefficient and cost expressions.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize};

use crate::expr::Expr;

pub const BUILTIN_NAMES: [&str; 4] = ["example1", "example2", "example3", "unconstrained"];

/// A config problem with its location in the document.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{location}: {message}")]
pub struct ConfigError {
    /// Field path, prefixed with `file:line:column` when known.
    pub location: String,
    pub message: String,
}

impl ConfigError {
    pub fn at(location: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            location: location.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(deserialize_with = "name_or_object")]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub mc: MonteCarloConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Example1,
    Example2,
    Example3 {
        #[serde(default = "default_t0")]
        t0: f64,
        #[serde(default = "default_x0")]
        x0: f64,
        #[serde(default = "default_x1")]
        x1: f64,
    },
    Unconstrained {
        #[serde(default = "one")]
        dim: usize,
        #[serde(default)]
        running_cost: f64,
        #[serde(default)]
        terminal_cost: f64,
    },
    Inline(InlineProblem),
}

impl ProblemConfig {
    pub fn builtin(name: &str) -> Option<Self> {
        Some(match name {
            "example1" => Self::Example1,
            "example2" => Self::Example2,
            "example3" => Self::Example3 {
                t0: default_t0(),
                x0: default_x0(),
                x1: default_x1(),
            },
            "unconstrained" => Self::Unconstrained {
                dim: 1,
                running_cost: 0.0,
                terminal_cost: 0.0,
            },
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Example1 => "example1",
            Self::Example2 => "example2",
            Self::Example3 { .. } => "example3",
            Self::Unconstrained { .. } => "unconstrained",
            Self::Inline(_) => "inline",
        }
    }
}

fn name_or_object<'de, D: Deserializer<'de>>(d: D) -> Result<ProblemConfig, D::Error> {
    struct NameOrObject;

    impl<'de> Visitor<'de> for NameOrObject {
        type Value = ProblemConfig;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            write!(f, "a built-in problem name or a problem object")
        }

        fn visit_str<E: de::Error>(self, s: &str) -> Result<ProblemConfig, E> {
            ProblemConfig::builtin(s).ok_or_else(|| E::unknown_variant(s, &BUILTIN_NAMES))
        }

        fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<ProblemConfig, A::Error> {
            ProblemConfig::deserialize(de::value::MapAccessDeserializer::new(map))
        }
    }

    d.deserialize_any(NameOrObject)
}

/// A problem given by expressions in `t` and `x_1 … x_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub dim: usize,
    /// Defaults to `dim`.
    #[serde(default)]
    pub dim_noise: Option<usize>,
    /// `dim` entries.
    pub drift: Vec<String>,
    /// `dim` rows of `dim_noise` entries.
    pub dispersion: Vec<Vec<String>>,
    #[serde(default)]
    pub constraint: ConstraintConfig,
    #[serde(default = "zero_expr")]
    pub running_cost: String,
    #[serde(default = "zero_expr")]
    pub terminal_cost: String,
}

impl InlineProblem {
    pub fn noise_dim(&self) -> usize {
        self.dim_noise.unwrap_or(self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideConfig {
    Below,
    Above,
}

/// Forbidden set. Axes are 1-based like `x_i`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    #[default]
    Empty,
    TerminalHalfSpace {
        axis: usize,
        threshold: f64,
        side: SideConfig,
    },
    RunningHalfSpace {
        axis: usize,
        threshold: f64,
        side: SideConfig,
    },
    TimeSlab {
        t0: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// `(t, x) ∈ D` iff `expr(t, x) ≤ 0`.
    Predicate {
        expr: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T", default = "one_f64")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            dt: default_dt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "yes")]
    pub use_bridge: bool,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n_paths: default_paths(),
            master_seed: default_seed(),
            use_bridge: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "default_clamp")]
    pub clamp_max: f64,
    #[serde(default = "default_u_floor")]
    pub u_floor: f64,
    /// Difference step for Monte Carlo gradients; `max(1e-3, 1e-2·√(T−t))` if absent.
    #[serde(default)]
    pub fd_step: Option<f64>,
    /// Lattice for the Monte Carlo policy of inline problems.
    #[serde(default)]
    pub lattice: Option<LatticeConfig>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            clamp_max: default_clamp(),
            u_floor: default_u_floor(),
            fd_step: None,
            lattice: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    #[serde(default)]
    pub t_spacing: Option<f64>,
    #[serde(default)]
    pub x_spacing: Option<f64>,
    /// Paths per node; `mc.n_paths` if absent.
    #[serde(default)]
    pub n_paths: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Not part of the config hash.
    #[serde(default, skip_serializing)]
    pub csv_path: Option<PathBuf>,
    /// Column subset, in output order.
    #[serde(default)]
    pub fields: Option<Vec<String>>,
}

fn default_t0() -> f64 {
    0.2
}
fn default_x0() -> f64 {
    -2.0
}
fn default_x1() -> f64 {
    2.0
}
fn one() -> usize {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_dt() -> f64 {
    0.005
}
fn default_paths() -> usize {
    100_000
}
fn default_seed() -> u64 {
    42
}
fn default_clamp() -> f64 {
    statecon::policy::DEFAULT_CLAMP_MAX
}
fn default_u_floor() -> f64 {
    statecon::policy::DEFAULT_U_FLOOR
}
fn zero_expr() -> String {
    "0".into()
}

impl ExperimentConfig {
    /// Defaults around a built-in problem.
    pub fn for_problem(problem: ProblemConfig) -> Self {
        Self {
            problem,
            grid: GridConfig::default(),
            mc: MonteCarloConfig::default(),
            policy: PolicyConfig::default(),
            outputs: OutputConfig::default(),
        }
    }

    /// Parse and validate. `origin` prefixes error locations.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            let path = e.path().to_string();
            let location = if inner.line() > 0 {
                format!("{origin}:{}:{} at `{path}`", inner.line(), inner.column())
            } else {
                format!("{origin} at `{path}`")
            };
            // serde_json appends its own position; drop it
            let message = inner.to_string();
            let message = match message.rfind(" at line ") {
                Some(i) => message[..i].to_string(),
                None => message,
            };
            ConfigError::at(location, message)
        })?;
        cfg.validate().map_err(|e| ConfigError::at(format!("{origin} at `{}`", e.location), e.message))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::at(path.display().to_string(), e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Check value ranges and that every expression parses.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |v: f64, at: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::at(at, format!("must be positive and finite, got {v}")))
            }
        };
        positive(self.grid.horizon, "grid.T")?;
        positive(self.grid.dt, "grid.dt")?;
        if self.grid.dt > self.grid.horizon {
            return Err(ConfigError::at("grid.dt", "exceeds the horizon"));
        }
        if self.mc.n_paths == 0 {
            return Err(ConfigError::at("mc.n_paths", "must be at least 1"));
        }
        if !(self.policy.clamp_max > 0.0) {
            return Err(ConfigError::at("policy.clamp_max", format!("must be positive, got {}", self.policy.clamp_max)));
        }
        if !(self.policy.u_floor >= 0.0 && self.policy.u_floor < 1.0) {
            return Err(ConfigError::at("policy.u_floor", format!("must lie in [0, 1), got {}", self.policy.u_floor)));
        }
        if let Some(h) = self.policy.fd_step {
            positive(h, "policy.fd_step")?;
        }
        if let Some(l) = &self.policy.lattice {
            let d = self.dim();
            if l.x_lower.len() != d || l.x_upper.len() != d {
                return Err(ConfigError::at("policy.lattice", format!("bounds need {d} entries")));
            }
            if l.x_lower.iter().zip(&l.x_upper).any(|(a, b)| !(a <= b)) {
                return Err(ConfigError::at("policy.lattice", "x_lower exceeds x_upper"));
            }
            if let Some(s) = l.t_spacing {
                positive(s, "policy.lattice.t_spacing")?;
            }
            if let Some(s) = l.x_spacing {
                positive(s, "policy.lattice.x_spacing")?;
            }
            if l.n_paths == Some(0) {
                return Err(ConfigError::at("policy.lattice.n_paths", "must be at least 1"));
            }
        }
        match &self.problem {
            ProblemConfig::Example1 | ProblemConfig::Example2 => Ok(()),
            ProblemConfig::Example3 { t0, x0, x1 } => {
                if !(*t0 > 0.0 && *t0 < self.grid.horizon) {
                    return Err(ConfigError::at("problem.t0", format!("must lie in (0, T), got {t0}")));
                }
                if !(x0 < x1) {
                    return Err(ConfigError::at("problem", format!("need x0 < x1, got [{x0}, {x1}]")));
                }
                Ok(())
            }
            ProblemConfig::Unconstrained {
                dim,
                running_cost,
                terminal_cost,
            } => {
                if *dim == 0 {
                    return Err(ConfigError::at("problem.dim", "must be at least 1"));
                }
                if !(*running_cost >= 0.0 && *terminal_cost >= 0.0) {
                    return Err(ConfigError::at("problem", "costs must be non-negative"));
                }
                Ok(())
            }
            ProblemConfig::Inline(p) => validate_inline(p).map(|_| ()),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.problem {
            ProblemConfig::Unconstrained { dim, .. } => *dim,
            ProblemConfig::Inline(p) => p.dim,
            _ => 1,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }
}

/// Parsed expressions of an inline problem.
pub struct InlineExprs {
    pub drift: Vec<Expr>,
    /// Row-major `dim × dim_noise`.
    pub dispersion: Vec<Expr>,
    pub running_cost: Expr,
    pub terminal_cost: Expr,
    pub predicate: Option<Expr>,
}

pub fn validate_inline(p: &InlineProblem) -> Result<InlineExprs, ConfigError> {
    let d = p.dim;
    let dn = p.noise_dim();
    if d == 0 || dn == 0 {
        return Err(ConfigError::at("problem.dim", "dimensions must be at least 1"));
    }
    let parse = |text: &str, at: String| Expr::parse(text, d).map_err(|e| ConfigError::at(at, e));
    if p.drift.len() != d {
        return Err(ConfigError::at("problem.drift", format!("expected {d} entries, got {}", p.drift.len())));
    }
    if p.dispersion.len() != d {
        return Err(ConfigError::at("problem.dispersion", format!("expected {d} rows, got {}", p.dispersion.len())));
    }
    let drift = p
        .drift
        .iter()
        .enumerate()
        .map(|(i, s)| parse(s, format!("problem.drift[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let mut dispersion = Vec::with_capacity(d * dn);
    for (i, row) in p.dispersion.iter().enumerate() {
        if row.len() != dn {
            return Err(ConfigError::at(
                format!("problem.dispersion[{i}]"),
                format!("expected {dn} entries, got {}", row.len()),
            ));
        }
        for (j, s) in row.iter().enumerate() {
            dispersion.push(parse(s, format!("problem.dispersion[{i}][{j}]"))?);
        }
    }
    let predicate = match &p.constraint {
        ConstraintConfig::Empty => None,
        ConstraintConfig::TerminalHalfSpace { axis, .. } | ConstraintConfig::RunningHalfSpace { axis, .. } => {
            if !(1..=d).contains(axis) {
                return Err(ConfigError::at("problem.constraint.axis", format!("must lie in 1..={d}, got {axis}")));
            }
            None
        }
        ConstraintConfig::TimeSlab { lower, upper, .. } => {
            if lower.len() != d || upper.len() != d {
                return Err(ConfigError::at("problem.constraint", format!("slab bounds need {d} entries")));
            }
            None
        }
        ConstraintConfig::Predicate { expr } => Some(parse(expr, "problem.constraint.expr".into())?),
    };
    Ok(InlineExprs {
        drift,
        dispersion,
        running_cost: parse(&p.running_cost, "problem.running_cost".into())?,
        terminal_cost: parse(&p.terminal_cost, "problem.terminal_cost".into())?,
        predicate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn name_expands_to_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"problem": "example3"}"#, "cfg").unwrap();
        assert_eq!(
            cfg.problem,
            ProblemConfig::Example3 {
                t0: 0.2,
                x0: -2.0,
                x1: 2.0
            }
        );
        assert_eq!(cfg.grid, GridConfig::default());
        assert_eq!(cfg.mc.n_paths, 100_000);
    }

    #[test]
    fn name_and_object_hash_alike() {
        let a = ExperimentConfig::from_json(r#"{"problem": "example3"}"#, "a").unwrap();
        let b = ExperimentConfig::from_json(r#"{"problem": {"kind": "example3", "t0": 0.2}}"#, "b").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_json(r#"{"problem": {"kind": "example3", "t0": 0.3}}"#, "c").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn unknown_problem_names_the_field() {
        let e = ExperimentConfig::from_json("{\n  \"problem\": \"example9\"\n}", "cfg.json").unwrap_err();
        assert!(e.location.starts_with("cfg.json:2:"), "{e}");
        assert!(e.location.contains("problem"), "{e}");
        assert!(e.message.contains("example9"), "{e}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let e = ExperimentConfig::from_json(r#"{"problem": "example1", "grid": {"T": 1, "dx": 2}}"#, "c").unwrap_err();
        assert!(e.location.contains("grid"), "{e}");
        assert!(e.message.contains("dx"), "{e}");
    }

    #[test]
    fn range_errors_name_the_field() {
        let e = ExperimentConfig::from_json(r#"{"problem": "example1", "grid": {"dt": -1}}"#, "c").unwrap_err();
        assert!(e.location.contains("grid.dt"), "{e}");
    }

    #[test]
    fn inline_problem_parses() {
        let text = r#"{
            "problem": {
                "kind": "inline", "dim": 2,
                "drift": ["-x_1", "0"],
                "dispersion": [["1", "0"], ["0", "sqrt(2)"]],
                "constraint": {"kind": "running_half_space", "axis": 2, "threshold": 0, "side": "below"},
                "running_cost": "x_1^2"
            },
            "policy": {"lattice": {"x_lower": [-1, 0], "x_upper": [1, 2]}}
        }"#;
        let cfg = ExperimentConfig::from_json(text, "c").unwrap();
        assert_eq!(cfg.dim(), 2);
        let ProblemConfig::Inline(p) = &cfg.problem else { panic!() };
        let parsed = validate_inline(p).unwrap();
        assert_eq!(parsed.dispersion[3].eval(0.0, &[0.0, 0.0]), 2f64.sqrt());
    }

    #[test]
    fn inline_expression_errors_point_at_entry() {
        let text = r#"{"problem": {"kind": "inline", "dim": 1, "drift": ["x_2"], "dispersion": [["1"]]}}"#;
        let e = ExperimentConfig::from_json(text, "c").unwrap_err();
        assert!(e.location.contains("problem.drift[0]"), "{e}");
    }

    #[test]
    fn malformed_json_reports_line() {
        let e = ExperimentConfig::from_json("{\n\"problem\": \"example1\",\n}", "c").unwrap_err();
        assert!(e.location.starts_with("c:3:"), "{e}");
    }
}
