use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::linalg::{dist, Point};
use crate::smooth::{FieldRef, Support, VectorField};

use super::density::DensityField;

/// A C² scalar function with analytic gradient and declared support.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Point;
    fn support(&self) -> Support {
        Support::Global
    }
}

/// φ(x) = A exp(1 − 1/(1 − |x − c|²/ρ²)) inside the ball, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactBump {
    center: Point,
    radius: f64,
    amplitude: f64,
}

impl CompactBump {
    pub fn new(center: Point, radius: f64, amplitude: f64) -> Result<Self> {
        if center.is_empty() || !(radius > 0.0) || !amplitude.is_finite() {
            return Err(LabError::Argument("bump needs a centre, positive radius and finite amplitude".into()));
        }
        Ok(Self { center, radius, amplitude })
    }

    fn u2(&self, x: &[f64]) -> f64 {
        let r = dist(x, &self.center);
        (r / self.radius).powi(2)
    }
}

impl ScalarField for CompactBump {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let u2 = self.u2(x);
        if u2 >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - 1.0 / (1.0 - u2)).exp()
        }
    }

    fn gradient(&self, x: &[f64]) -> Point {
        let u2 = self.u2(x);
        if u2 >= 1.0 {
            return vec![0.0; x.len()];
        }
        let w = 1.0 - u2;
        let k = -2.0 * self.value(x) / (self.radius * self.radius * w * w);
        x.iter().zip(&self.center).map(|(a, c)| k * (a - c)).collect()
    }

    fn support(&self) -> Support {
        Support::Ball { center: self.center.clone(), radius: self.radius }
    }
}

struct DensityAsScalar(Arc<dyn DensityField>);

impl ScalarField for DensityAsScalar {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.density(x)
    }
    fn gradient(&self, x: &[f64]) -> Point {
        self.0.gradient(x)
    }
}

/// Time-independent field with X_i = ∂_j φ, X_j = −∂_i φ, all other components zero.
pub struct XijField {
    potential: Arc<dyn ScalarField>,
    i: usize,
    j: usize,
}

impl XijField {
    pub fn new(potential: Arc<dyn ScalarField>, i: usize, j: usize) -> Result<Self> {
        let d = potential.dim();
        if i == j {
            return Err(LabError::Argument(format!("X^ij needs distinct indices, got i = j = {i}")));
        }
        if i >= d || j >= d {
            return Err(LabError::Argument(format!("indices ({i}, {j}) out of range for d = {d}")));
        }
        Ok(Self { potential, i, j })
    }

    pub fn indices(&self) -> (usize, usize) {
        (self.i, self.j)
    }

    pub fn into_ref(self) -> FieldRef {
        Arc::new(self)
    }
}

impl VectorField for XijField {
    fn dim(&self) -> usize {
        self.potential.dim()
    }

    fn eval(&self, _t: f64, x: &[f64]) -> Result<Point> {
        let g = self.potential.gradient(x);
        let mut v = vec![0.0; x.len()];
        v[self.i] = g[self.j];
        v[self.j] = -g[self.i];
        Ok(v)
    }

    fn support(&self) -> Support {
        self.potential.support()
    }
}

/// X^{ij} built from the gradient of a density; Div X = Div(pX) = 0.
pub fn build_xij(p: Arc<dyn DensityField>, i: usize, j: usize) -> Result<XijField> {
    XijField::new(Arc::new(DensityAsScalar(p)), i, j)
}

/// X^{ij} built from a compactly supported potential; inherits its support.
pub fn build_compact_divfree(phi: Arc<dyn ScalarField>, i: usize, j: usize) -> Result<XijField> {
    XijField::new(phi, i, j)
}

/// X / p; divergence free fields Y become p-preserving generators Y/p.
pub struct DensityScaledField {
    field: FieldRef,
    density: Arc<dyn DensityField>,
    floor: f64,
}

impl DensityScaledField {
    /// `floor` bounds p from below; evaluation where p < floor inside the support fails.
    pub fn new(field: FieldRef, density: Arc<dyn DensityField>, floor: f64) -> Result<Self> {
        if field.dim() != density.dim() {
            return Err(LabError::Argument("field and density differ in dimension".into()));
        }
        if !(floor > 0.0) {
            return Err(LabError::Argument("density floor must be positive".into()));
        }
        Ok(Self { field, density, floor })
    }
}

impl VectorField for DensityScaledField {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn eval(&self, t: f64, x: &[f64]) -> Result<Point> {
        let v = self.field.eval(t, x)?;
        if v.iter().all(|c| *c == 0.0) {
            return Ok(v);
        }
        let p = self.density.density(x);
        if p < self.floor {
            return Err(LabError::Domain(format!("density {p:e} below floor {:e} at {x:?}", self.floor)));
        }
        Ok(v.iter().map(|c| c / p).collect())
    }

    fn support(&self) -> Support {
        self.field.support()
    }
}

/// p · X, the flux whose divergence governs whether X preserves p.
pub struct WeightedField {
    field: FieldRef,
    density: Arc<dyn DensityField>,
}

impl WeightedField {
    pub fn new(field: FieldRef, density: Arc<dyn DensityField>) -> Self {
        Self { field, density }
    }
}

impl VectorField for WeightedField {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn eval(&self, t: f64, x: &[f64]) -> Result<Point> {
        let p = self.density.density(x);
        Ok(self.field.eval(t, x)?.iter().map(|c| p * c).collect())
    }

    fn support(&self) -> Support {
        self.field.support()
    }
}
