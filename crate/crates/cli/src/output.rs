//! CSV tables with a commented header.
//!
//! ```text
//! # statecon estimate
//! # config_sha256=…
//! # generated_unix=…        (omitted with --no-timestamp)
//! # units: t=time x_i=state u_mean=1 …
//! t,x_1,u_mean,…
//! …
//! # summary: violation_fraction=…
//! ```

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::ConfigError;

pub struct Table {
    title: String,
    columns: Vec<(String, &'static str)>,
    rows: Vec<Vec<String>>,
    summary: Vec<(String, String)>,
}

/// Shortest round-trip decimal, in exponent form outside `[1e-4, 1e16)`;
/// `inf`, `-inf` and `nan` for the rest. Negative zero prints as `0`.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.is_nan() {
        "nan".into()
    } else if v.is_finite() && !(1e-4..1e16).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

impl Table {
    /// `columns` pairs each name with its unit.
    pub fn new(title: impl Into<String>, columns: Vec<(String, &'static str)>) -> Self {
        Self {
            title: title.into(),
            columns,
            rows: Vec::new(),
            summary: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn summary(&mut self, key: &str, value: String) {
        self.summary.push((key.to_string(), value));
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.0 == name)
    }

    /// Keep only `fields`, in that order.
    pub fn select(&mut self, fields: &[String]) -> Result<(), ConfigError> {
        let idx = fields
            .iter()
            .map(|f| {
                self.column_index(f).ok_or_else(|| {
                    let known: Vec<&str> = self.columns.iter().map(|c| c.0.as_str()).collect();
                    ConfigError::at("outputs.fields", format!("unknown column `{f}`; this table has {}", known.join(", ")))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.columns = idx.iter().map(|&i| self.columns[i].clone()).collect();
        for row in &mut self.rows {
            *row = idx.iter().map(|&i| row[i].clone()).collect();
        }
        Ok(())
    }

    pub fn render(&self, config_hash: &str, timestamp: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# statecon {}", self.title);
        let _ = writeln!(out, "# config_sha256={config_hash}");
        if timestamp {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            let _ = writeln!(out, "# generated_unix={secs}");
        }
        let units: Vec<String> = self.columns.iter().map(|(n, u)| format!("{n}={u}")).collect();
        let _ = writeln!(out, "# units: {}", units.join(" "));
        let names: Vec<&str> = self.columns.iter().map(|c| c.0.as_str()).collect();
        let _ = writeln!(out, "{}", names.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        if !self.summary.is_empty() {
            let pairs: Vec<String> = self.summary.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(out, "# summary: {}", pairs.join(" "));
        }
        out
    }
}

/// `x_1 … x_d` state columns.
pub fn state_columns(d: usize) -> Vec<(String, &'static str)> {
    (1..=d).map(|i| (format!("x_{i}"), "state")).collect()
}
