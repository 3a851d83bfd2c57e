//! Scenario files: one TOML document per run, schema-checked before anything executes.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use ica_lab::deformation::ConstraintTolerances;
use ica_lab::maps::{IdentityMap, LinearMap, MapClass, MoebiusMap, PolarMap};
use ica_lab::spurious::{RadialProfile, RadiusRotationProfile};
use ica_lab::{FieldRef, FnField, MapRef, Matrix, Point};
use ica_lab_trainer::{DriftScenario, TrainConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Catalog name or free-form label; echoed in the report.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub run: RunSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    Verify,
    Spurious,
    Prop1,
    DeformCheck,
    TrainDrift,
}

impl RunKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Verify => "verify",
            Self::Spurious => "spurious",
            Self::Prop1 => "prop1",
            Self::DeformCheck => "deform-check",
            Self::TrainDrift => "train-drift",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunSpec {
    Verify(VerifySpec),
    Spurious(SpuriousSpec),
    Prop1(Prop1Spec),
    DeformCheck(DeformSpec),
    TrainDrift(TrainDriftSpec),
}

impl RunSpec {
    pub fn kind(&self) -> RunKind {
        match self {
            Self::Verify(_) => RunKind::Verify,
            Self::Spurious(_) => RunKind::Spurious,
            Self::Prop1(_) => RunKind::Prop1,
            Self::DeformCheck(_) => RunKind::DeformCheck,
            Self::TrainDrift(_) => RunKind::TrainDrift,
        }
    }
}

fn default_points() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapSpec {
    Identity { d: usize },
    Linear { matrix: Vec<Vec<f64>> },
    Shear {},
    Rotation { d: usize, i: usize, j: usize, angle: f64 },
    Moebius {
        b: Point,
        a: Point,
        alpha: f64,
        epsilon: u8,
        /// Orthogonal matrix rows; identity when omitted.
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
    },
    Polar { d: usize, inner: f64, outer: f64 },
}

impl MapSpec {
    pub fn build(&self) -> Result<MapRef> {
        Ok(match self {
            Self::Identity { d } => {
                if *d == 0 {
                    return Err(CliError::Schema("identity map needs d >= 1".into()));
                }
                Arc::new(IdentityMap { dim: *d })
            }
            Self::Linear { matrix } => Arc::new(LinearMap::new(Matrix::from_rows(matrix)?)?),
            Self::Shear {} => Arc::new(LinearMap::new(Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]])?)?),
            Self::Rotation { d, i, j, angle } => {
                if i == j || *i >= *d || *j >= *d {
                    return Err(CliError::Schema(format!("rotation plane ({i}, {j}) invalid for d = {d}")));
                }
                Arc::new(LinearMap::rotation(*d, *i, *j, *angle))
            }
            Self::Moebius { b, a, alpha, epsilon, matrix } => {
                let m = match matrix {
                    Some(rows) => Matrix::from_rows(rows)?,
                    None => Matrix::identity(a.len()),
                };
                Arc::new(MoebiusMap::new(b.clone(), a.clone(), *alpha, m, *epsilon)?)
            }
            Self::Polar { d, inner, outer } => Arc::new(PolarMap::new(*d, *inner, *outer)?),
        })
    }

    /// Box the test points are drawn from when the config gives none.
    pub fn default_box(&self, dim: usize) -> Result<(Point, Point)> {
        Ok(match self {
            Self::Polar { d, inner, outer } => PolarMap::new(*d, *inner, *outer)?.parameter_box(),
            Self::Moebius { a, .. } => (a.iter().map(|c| c + 0.2).collect(), a.iter().map(|c| c + 2.0).collect()),
            _ => (vec![-1.0; dim], vec![1.0; dim]),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub map: MapSpec,
    pub classes: Vec<MapClass>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "VerifySpec::default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub lo: Option<Point>,
    #[serde(default)]
    pub hi: Option<Point>,
    /// Compares the polar determinant against its closed form.
    #[serde(default)]
    pub check_determinant: bool,
}

impl VerifySpec {
    fn default_tol() -> f64 {
        1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpuriousSpec {
    RadiusRotation {
        center: Point,
        plane: (usize, usize),
        amplitude: f64,
        margin: f64,
        t: f64,
        #[serde(default = "default_points")]
        points: usize,
        #[serde(default = "SpuriousSpec::default_det_tol")]
        tol: f64,
    },
    MixtureFlow {
        #[serde(default)]
        i: usize,
        #[serde(default = "SpuriousSpec::default_j")]
        j: usize,
        times: Vec<f64>,
        #[serde(default = "SpuriousSpec::default_steps")]
        steps: usize,
        #[serde(default = "SpuriousSpec::default_flow_points")]
        points: usize,
        #[serde(default = "SpuriousSpec::default_volume_tol")]
        tol: f64,
        #[serde(default = "SpuriousSpec::default_mpt_tol")]
        mpt_tol: f64,
    },
}

impl SpuriousSpec {
    fn default_det_tol() -> f64 {
        1e-8
    }
    fn default_j() -> usize {
        1
    }
    fn default_steps() -> usize {
        200
    }
    fn default_flow_points() -> usize {
        200
    }
    fn default_volume_tol() -> f64 {
        1e-4
    }
    fn default_mpt_tol() -> f64 {
        1e-3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    Gaussian { sigma: f64 },
    Annulus { inner: f64, outer: f64 },
}

impl ProfileSpec {
    pub fn profile(&self) -> RadialProfile {
        match *self {
            Self::Gaussian { sigma } => RadialProfile::Gaussian { sigma },
            Self::Annulus { inner, outer } => RadialProfile::Annulus { inner, outer },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prop1Spec {
    pub d: usize,
    pub profile: ProfileSpec,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "Prop1Spec::default_oct_tol")]
    pub tol: f64,
    #[serde(default = "Prop1Spec::default_density_tol")]
    pub density_tol: f64,
    /// Number of random rotations for the non-identifiability exhibit (d = 2 only).
    #[serde(default)]
    pub rotations: usize,
    #[serde(default = "Prop1Spec::default_separation")]
    pub min_separation: f64,
}

impl Prop1Spec {
    fn default_oct_tol() -> f64 {
        1e-5
    }
    fn default_density_tol() -> f64 {
        1e-3
    }
    fn default_separation() -> f64 {
        0.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero { d: usize },
    Linear { matrix: Vec<Vec<f64>> },
    RadiusRotation { center: Point, plane: (usize, usize), amplitude: f64, margin: f64 },
}

impl FieldSpec {
    pub fn build(&self) -> Result<FieldRef> {
        Ok(match self {
            Self::Zero { d } => Arc::new(FnField::zero(*d)),
            Self::Linear { matrix } => Arc::new(FnField::linear(Matrix::from_rows(matrix)?)),
            Self::RadiusRotation { center, plane, amplitude, margin } => {
                Arc::new(RadiusRotationProfile::with_margin(center.clone(), *plane, *amplitude, *margin)?.generator())
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    /// The field should satisfy the first-order system.
    #[default]
    Admissible,
    /// The field should violate it (first-order residual above tolerance).
    Violates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceQuery {
    pub mu: Vec<f64>,
    pub m: Vec<i64>,
    pub i: usize,
    #[serde(default)]
    pub expect_resonant: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformSpec {
    pub base: MapSpec,
    pub field: FieldSpec,
    #[serde(default = "DeformSpec::default_points")]
    pub points: usize,
    #[serde(default)]
    pub tolerances: ConstraintTolerances,
    #[serde(default)]
    pub expect: Expectation,
    #[serde(default)]
    pub wave: bool,
    #[serde(default)]
    pub boundary_epsilon: Option<f64>,
    #[serde(default)]
    pub resonance: Vec<ResonanceQuery>,
}

impl DeformSpec {
    fn default_points() -> usize {
        200
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainDriftSpec {
    pub scenario: DriftScenario,
    #[serde(default = "TrainDriftSpec::default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "TrainDriftSpec::default_kl_max")]
    pub kl_max: f64,
    /// Final C_OCT bound for arms with λ > 0.
    #[serde(default)]
    pub c_oct_max: Option<f64>,
}

impl TrainDriftSpec {
    fn default_lambdas() -> Vec<f64> {
        vec![0.0, 2.0]
    }
    fn default_kl_max() -> f64 {
        0.2
    }
}

/// Top-level flag overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub lambda: Option<f64>,
    pub steps: Option<usize>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(tol) = o.tol {
            match &mut self.run {
                RunSpec::Verify(v) => v.tol = tol,
                RunSpec::Spurious(SpuriousSpec::RadiusRotation { tol: t, .. })
                | RunSpec::Spurious(SpuriousSpec::MixtureFlow { tol: t, .. }) => *t = tol,
                RunSpec::Prop1(p) => p.tol = tol,
                RunSpec::DeformCheck(d) => d.tolerances.first_order = tol,
                RunSpec::TrainDrift(t) => t.kl_max = tol,
            }
        }
        if o.lambda.is_some() || o.steps.is_some() {
            let RunSpec::TrainDrift(t) = &mut self.run else {
                return Err(CliError::Schema("--lambda and --steps only apply to train-drift".into()));
            };
            if let Some(l) = o.lambda {
                t.lambdas = vec![l];
            }
            if let Some(s) = o.steps {
                t.train.steps = s;
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::Schema(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match &self.run {
            RunSpec::Verify(v) => {
                positive("tol", v.tol)?;
                if v.points == 0 || v.classes.is_empty() {
                    return Err(CliError::Schema("verify needs points > 0 and at least one class".into()));
                }
                if v.lo.is_some() != v.hi.is_some() {
                    return Err(CliError::Schema("give both lo and hi or neither".into()));
                }
                if v.check_determinant && !matches!(v.map, MapSpec::Polar { .. }) {
                    return Err(CliError::Schema("check_determinant needs a polar map".into()));
                }
            }
            RunSpec::Spurious(SpuriousSpec::RadiusRotation { tol, points, .. }) => {
                positive("tol", *tol)?;
                if *points == 0 {
                    return Err(CliError::Schema("points must be positive".into()));
                }
            }
            RunSpec::Spurious(SpuriousSpec::MixtureFlow { tol, mpt_tol, times, steps, points, .. }) => {
                positive("tol", *tol)?;
                positive("mpt_tol", *mpt_tol)?;
                if times.is_empty() || *steps == 0 || *points == 0 {
                    return Err(CliError::Schema("mixture-flow needs times, steps > 0 and points > 0".into()));
                }
            }
            RunSpec::Prop1(p) => {
                positive("tol", p.tol)?;
                positive("density_tol", p.density_tol)?;
                if p.rotations > 0 && p.d != 2 {
                    return Err(CliError::Schema("rotated family exhibit is defined for d = 2".into()));
                }
            }
            RunSpec::DeformCheck(d) => {
                positive("tolerances.first_order", d.tolerances.first_order)?;
                if d.points == 0 {
                    return Err(CliError::Schema("points must be positive".into()));
                }
            }
            RunSpec::TrainDrift(t) => {
                positive("kl_max", t.kl_max)?;
                if t.lambdas.is_empty() {
                    return Err(CliError::Schema("lambdas must not be empty".into()));
                }
                for &l in &t.lambdas {
                    let cfg = TrainConfig { lambda: l, seed: self.seed, ..t.train.clone() };
                    cfg.validate().map_err(|e| CliError::Schema(e.to_string()))?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_verify_config() {
        let cfg = ScenarioConfig::parse(
            r#"
            seed = 3
            [run]
            kind = "verify"
            classes = ["oct"]
            map = { type = "polar", d = 3, inner = 0.5, outer = 2.0 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        let RunSpec::Verify(v) = &cfg.run else { panic!() };
        assert_eq!(v.points, 500);
        assert_eq!(v.classes, vec![MapClass::Oct]);
    }

    #[test]
    fn unknown_fields_are_rejected_everywhere() {
        let top = "sed = 3\n[run]\nkind = \"verify\"\nclasses = [\"oct\"]\nmap = { type = \"shear\" }";
        assert!(matches!(ScenarioConfig::parse(top), Err(CliError::Schema(_))));
        let inner = "[run]\nkind = \"verify\"\nclasses = [\"oct\"]\ncolour = 1\nmap = { type = \"shear\" }";
        assert!(ScenarioConfig::parse(inner).is_err());
        let map = "[run]\nkind = \"verify\"\nclasses = [\"oct\"]\nmap = { type = \"shear\", d = 2 }";
        assert!(ScenarioConfig::parse(map).is_err());
        let train = "[run]\nkind = \"train-drift\"\nscenario = \"rot\"\n[run.train]\nstep = 5";
        assert!(ScenarioConfig::parse(train).is_err());
        assert!(ScenarioConfig::parse("[run]\nkind = \"bake\"").is_err());
    }

    #[test]
    fn overrides_touch_only_their_fields() {
        let mut cfg =
            ScenarioConfig::parse("[run]\nkind = \"train-drift\"\nscenario = \"rot\"\n[run.train]\nsteps = 5").unwrap();
        cfg.apply(&Overrides { seed: Some(9), lambda: Some(2.0), steps: Some(7), ..Default::default() }).unwrap();
        let RunSpec::TrainDrift(t) = &cfg.run else { panic!() };
        assert_eq!((cfg.seed, t.lambdas.clone(), t.train.steps, t.train.batch), (9, vec![2.0], 7, 256));
        let mut v = ScenarioConfig::parse("[run]\nkind = \"verify\"\nclasses = [\"oct\"]\nmap = { type = \"shear\" }")
            .unwrap();
        assert!(v.apply(&Overrides { steps: Some(3), ..Default::default() }).is_err());
        assert!(v.apply(&Overrides { tol: Some(-1.0), ..Default::default() }).is_err());
    }
}
