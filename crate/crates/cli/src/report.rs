use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Checks in declaration order, each name at most once.
#[derive(Debug, Default, Clone)]
pub struct CheckList {
    checks: Vec<Check>,
    names: BTreeSet<String>,
}

impl CheckList {
    pub fn push(&mut self, check: Check) -> Result<()> {
        if !self.names.insert(check.name.clone()) {
            return Err(CliError::Schema(format!("check {:?} declared twice", check.name)));
        }
        self.checks.push(check);
        Ok(())
    }

    /// Passes iff `value <= threshold`.
    pub fn at_most(&mut self, name: impl Into<String>, value: f64, threshold: f64) -> Result<()> {
        self.push(Check {
            name: name.into(),
            pass: value <= threshold,
            value: Some(value),
            threshold: Some(threshold),
            detail: None,
        })
    }

    /// Passes iff `value > threshold`.
    pub fn above(&mut self, name: impl Into<String>, value: f64, threshold: f64) -> Result<()> {
        self.push(Check {
            name: name.into(),
            pass: value > threshold,
            value: Some(value),
            threshold: Some(threshold),
            detail: Some("must exceed threshold".into()),
        })
    }

    pub fn into_vec(self) -> Vec<Check> {
        self.checks
    }
}

/// One row of residuals.csv.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub check: String,
    pub point: String,
    pub residual: f64,
}

impl ResidualRow {
    pub fn new(check: &str, point: &[f64], residual: f64) -> Self {
        let point = point.iter().map(|c| format!("{c:.12e}")).collect::<Vec<_>>().join(" ");
        Self { check: check.to_string(), point, residual }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: Option<String>,
    pub kind: String,
    pub seed: u64,
    pub config_hash: String,
    pub provenance: String,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
}

/// Package name, version and the revision baked in at build time, if any.
pub fn provenance() -> String {
    let rev = option_env!("ICA_LAB_REVISION").unwrap_or("unknown-revision");
    format!("{} {} ({rev})", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}
