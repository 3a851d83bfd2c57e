//! Scenario files, the built-in catalog and the run pipeline behind the
//! `ica-lab` binary.

pub mod catalog;
pub mod config;
pub mod error;
pub mod report;
pub mod run;

use std::path::Path;

pub use config::{Overrides, RunKind, ScenarioConfig};
pub use error::{CliError, Result};
pub use report::RunReport;

/// Loads a scenario from a file or the catalog, checks it is of the
/// expected kind and applies the flag overrides.
pub fn load(kind: RunKind, path: Option<&Path>, builtin: Option<&str>, overrides: &Overrides) -> Result<ScenarioConfig> {
    let mut cfg = match (path, builtin) {
        (Some(p), None) => ScenarioConfig::parse(&std::fs::read_to_string(p)?)?,
        (None, Some(name)) => catalog::find(name)?.config()?,
        _ => return Err(CliError::Schema("give exactly one of --config or --scenario".into())),
    };
    if cfg.run.kind() != kind {
        return Err(CliError::Schema(format!(
            "config describes a {} run, not {}",
            cfg.run.kind().as_str(),
            kind.as_str()
        )));
    }
    cfg.apply(overrides)?;
    Ok(cfg)
}

/// 0 iff every check passed, 3 otherwise.
pub fn exit_code(report: &RunReport) -> i32 {
    if report.pass {
        0
    } else {
        3
    }
}
