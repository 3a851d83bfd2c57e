//! Built-in scenarios, stored as the same TOML a user would write.

use serde::Serialize;

use crate::config::{RunKind, ScenarioConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Entry {
    pub name: &'static str,
    pub kind: RunKind,
    pub description: &'static str,
    #[serde(skip)]
    pub toml: &'static str,
}

impl Entry {
    pub fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::parse(self.toml)?;
        cfg.name = Some(self.name.to_string());
        Ok(cfg)
    }
}

pub const CATALOG: &[Entry] = &[
    Entry {
        name: "moebius-conformal",
        kind: RunKind::Verify,
        description: "Sphere inversion in d = 3 is conformal and OCT",
        toml: r#"
[run]
kind = "verify"
classes = ["conformal", "oct"]
map = { type = "moebius", b = [0.0, 0.0, 0.0], a = [0.0, 0.0, 0.0], alpha = 1.0, epsilon = 2 }
"#,
    },
    Entry {
        name: "polar-oct",
        kind: RunKind::Verify,
        description: "Hyperspherical coordinates in d = 3 are OCT with the closed-form determinant",
        toml: r#"
[run]
kind = "verify"
classes = ["oct"]
check_determinant = true
map = { type = "polar", d = 3, inner = 0.5, outer = 2.0 }
"#,
    },
    Entry {
        name: "shear-not-oct",
        kind: RunKind::Verify,
        description: "The shear [[1, 1], [0, 1]] fails the OCT test (exits 3 by design)",
        toml: r#"
[run]
kind = "verify"
classes = ["oct"]
map = { type = "shear" }
"#,
    },
    Entry {
        name: "radius-rotation",
        kind: RunKind::Spurious,
        description: "Radius-dependent rotation of the unit cube: volume preserving, boundary fixed",
        toml: r#"
[run]
kind = "spurious"
type = "radius-rotation"
center = [0.5, 0.45, 0.55]
plane = [1, 2]
amplitude = 4.0
margin = 0.05
t = 1.3
"#,
    },
    Entry {
        name: "mixture-flow",
        kind: RunKind::Spurious,
        description: "Flow of the X^{01} field of a three-component Gaussian mixture preserves it",
        toml: r#"
[run]
kind = "spurious"
type = "mixture-flow"
times = [0.25, 0.5, 1.0]
"#,
    },
    Entry {
        name: "prop1-gaussian",
        kind: RunKind::Prop1,
        description: "OCT map pushing the uniform cube to a standard Gaussian, d = 2, with 5 rotated copies",
        toml: r#"
[run]
kind = "prop1"
d = 2
profile = { type = "gaussian", sigma = 1.0 }
rotations = 5
"#,
    },
    Entry {
        name: "prop1-annulus",
        kind: RunKind::Prop1,
        description: "OCT map pushing the uniform cube to a uniform spherical shell, d = 3",
        toml: r#"
[run]
kind = "prop1"
d = 3
profile = { type = "annulus", inner = 1.0, outer = 2.0 }
"#,
    },
    Entry {
        name: "deform-rigid",
        kind: RunKind::DeformCheck,
        description: "Rigid rotation generator is an admissible deformation of the identity",
        toml: r#"
[run]
kind = "deform-check"
base = { type = "identity", d = 3 }
field = { type = "linear", matrix = [[0.0, 1.0, -0.5], [-1.0, 0.0, 2.0], [0.5, -2.0, 0.0]] }
wave = true
"#,
    },
    Entry {
        name: "deform-radius-rotation",
        kind: RunKind::DeformCheck,
        description: "Radius-dependent rotation generator violates the first-order system of a linear OCT",
        toml: r#"
[run]
kind = "deform-check"
base = { type = "linear", matrix = [[2.0, 0.0], [0.0, 1.0]] }
field = { type = "radius-rotation", center = [0.5, 0.5], plane = [0, 1], amplitude = 2.0, margin = 0.05 }
expect = "violates"
boundary_epsilon = 0.04

[[run.resonance]]
mu = [2.0, 1.0]
m = [0, 1]
i = 0
expect_resonant = true
"#,
    },
    Entry {
        name: "drift-rot",
        kind: RunKind::TrainDrift,
        description: "Concept drift by rotation e^{tW} diag(2, 1), both arms",
        toml: r#"
[run]
kind = "train-drift"
scenario = "rot"
"#,
    },
    Entry {
        name: "drift-pol",
        kind: RunKind::TrainDrift,
        description: "Concept drift through polar coordinates with a moving radius, both arms",
        toml: r#"
[run]
kind = "train-drift"
scenario = "pol"
"#,
    },
];

pub fn find(name: &str) -> Result<&'static Entry> {
    CATALOG
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| CliError::Schema(format!("no built-in scenario named {name:?}; see `ica-lab list`")))
}

pub fn filtered(kind: Option<RunKind>) -> Vec<&'static Entry> {
    CATALOG.iter().filter(|e| kind.map_or(true, |k| e.kind == k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_parses_and_matches_its_kind() {
        assert!(CATALOG.len() >= 6);
        for e in CATALOG {
            let cfg = e.config().unwrap_or_else(|err| panic!("{}: {err}", e.name));
            assert_eq!(cfg.run.kind(), e.kind, "{}", e.name);
        }
    }

    #[test]
    fn filter_by_kind() {
        let sp = filtered(Some(RunKind::Spurious));
        assert!(!sp.is_empty() && sp.iter().all(|e| e.kind == RunKind::Spurious));
        assert_eq!(filtered(None).len(), CATALOG.len());
        assert!(find("nope").is_err());
    }
}
