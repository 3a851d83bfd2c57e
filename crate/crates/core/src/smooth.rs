//! The two behavioural contracts everything else is built from: differentiable
//! maps R^d → R^d and (possibly time-dependent) vector fields.

use std::fmt;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::linalg::{dist, Matrix, Point};
use crate::numerics::{self, DEFAULT_FD_STEP};

/// Where a map may be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Whole,
    /// R^d minus the closed ball of radius `radius` around `center`.
    Punctured { center: Point, radius: f64 },
    /// Open axis-aligned box.
    Box { lo: Point, hi: Point },
    /// Open spherical shell.
    Annulus { center: Point, inner: f64, outer: f64 },
}

impl Domain {
    pub fn unit_cube(d: usize) -> Self {
        Domain::Box { lo: vec![0.0; d], hi: vec![1.0; d] }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Domain::Whole => true,
            Domain::Punctured { center, radius } => dist(x, center) > *radius,
            Domain::Box { lo, hi } => {
                x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v > l && v < h)
            }
            Domain::Annulus { center, inner, outer } => {
                let r = dist(x, center);
                r > *inner && r < *outer
            }
        }
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(LabError::Domain(format!("point {x:?} outside {self:?}")))
        }
    }
}

/// An evaluable differentiable map R^d → R^d.
///
/// Only `dim`, `domain` and `eval` are required. The Jacobian falls back to
/// central differences, the log-determinant to an LU of that Jacobian, and the
/// inverse is reported as unavailable.
pub trait SmoothMap: Send + Sync {
    fn dim(&self) -> usize;

    fn domain(&self) -> Domain {
        Domain::Whole
    }

    fn eval(&self, x: &[f64]) -> Result<Point>;

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        numerics::fd_jacobian(self, x, DEFAULT_FD_STEP)
    }

    fn has_inverse(&self) -> bool {
        false
    }

    fn inverse(&self, _y: &[f64]) -> Result<Point> {
        Err(LabError::Capability(format!("{} has no inverse", self.name())))
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        let ld = self.jacobian(x)?.log_abs_det();
        if ld.is_finite() {
            Ok(ld)
        } else {
            Err(LabError::Singularity(format!("singular Jacobian at {x:?}")))
        }
    }

    fn name(&self) -> String {
        "map".into()
    }
}

pub type MapRef = Arc<dyn SmoothMap>;

impl fmt::Debug for dyn SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(d={})", self.name(), self.dim())
    }
}

/// Support of a vector field or scalar bump.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Global,
    Ball { center: Point, radius: f64 },
}

impl Support {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Support::Global => true,
            Support::Ball { center, radius } => dist(x, center) < *radius,
        }
    }
}

/// A possibly time-dependent vector field R × R^d → R^d.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, x: &[f64]) -> Result<Point>;

    /// Analytic spatial Jacobian, when one is known.
    fn jacobian(&self, _t: f64, _x: &[f64]) -> Option<Result<Matrix>> {
        None
    }

    fn support(&self) -> Support {
        Support::Global
    }
}

pub type FieldRef = Arc<dyn VectorField>;

/// Spatial Jacobian of a field: analytic when provided, central differences otherwise.
pub fn field_jacobian(field: &dyn VectorField, t: f64, x: &[f64], h: f64) -> Result<Matrix> {
    if let Some(j) = field.jacobian(t, x) {
        return j;
    }
    let d = field.dim();
    let mut jac = Matrix::zeros(d, d);
    let mut probe = x.to_vec();
    for j in 0..d {
        probe[j] = x[j] + h;
        let plus = field.eval(t, &probe)?;
        probe[j] = x[j] - h;
        let minus = field.eval(t, &probe)?;
        probe[j] = x[j];
        for i in 0..d {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

type MapFn = dyn Fn(&[f64]) -> Result<Point> + Send + Sync;

/// A map given by closures; the Jacobian and inverse are optional.
pub struct FnMap {
    dim: usize,
    domain: Domain,
    name: String,
    eval: Box<MapFn>,
    inverse: Option<Box<MapFn>>,
    jacobian: Option<Box<dyn Fn(&[f64]) -> Result<Matrix> + Send + Sync>>,
}

impl FnMap {
    pub fn new(
        dim: usize,
        name: impl Into<String>,
        eval: impl Fn(&[f64]) -> Result<Point> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, domain: Domain::Whole, name: name.into(), eval: Box::new(eval), inverse: None, jacobian: None }
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_inverse(mut self, inv: impl Fn(&[f64]) -> Result<Point> + Send + Sync + 'static) -> Self {
        self.inverse = Some(Box::new(inv));
        self
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&[f64]) -> Result<Matrix> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Box::new(jac));
        self
    }
}

impl SmoothMap for FnMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn domain(&self) -> Domain {
        self.domain.clone()
    }

    fn eval(&self, x: &[f64]) -> Result<Point> {
        self.domain.check(x)?;
        (self.eval)(x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        match &self.jacobian {
            Some(j) => {
                self.domain.check(x)?;
                j(x)
            }
            None => numerics::fd_jacobian(self, x, DEFAULT_FD_STEP),
        }
    }

    fn has_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    fn inverse(&self, y: &[f64]) -> Result<Point> {
        match &self.inverse {
            Some(inv) => inv(y),
            None => Err(LabError::Capability(format!("{} has no inverse", self.name))),
        }
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

/// A vector field given by a closure.
pub struct FnField {
    dim: usize,
    support: Support,
    eval: Box<dyn Fn(f64, &[f64]) -> Result<Point> + Send + Sync>,
    jacobian: Option<Box<dyn Fn(f64, &[f64]) -> Matrix + Send + Sync>>,
}

impl FnField {
    pub fn new(dim: usize, eval: impl Fn(f64, &[f64]) -> Point + Send + Sync + 'static) -> Self {
        Self { dim, support: Support::Global, eval: Box::new(move |t, x| Ok(eval(t, x))), jacobian: None }
    }

    pub fn fallible(
        dim: usize,
        eval: impl Fn(f64, &[f64]) -> Result<Point> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, support: Support::Global, eval: Box::new(eval), jacobian: None }
    }

    pub fn with_support(mut self, support: Support) -> Self {
        self.support = support;
        self
    }

    pub fn with_jacobian(mut self, jac: impl Fn(f64, &[f64]) -> Matrix + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Box::new(jac));
        self
    }

    /// The time-independent linear field x ↦ Wx.
    pub fn linear(w: Matrix) -> Self {
        let d = w.rows();
        let wj = w.clone();
        Self::new(d, move |_, x| w.matvec(x)).with_jacobian(move |_, _| wj.clone())
    }

    pub fn constant(c: Point) -> Self {
        let d = c.len();
        Self::new(d, move |_, _| c.clone()).with_jacobian(move |_, _| Matrix::zeros(d, d))
    }

    pub fn zero(d: usize) -> Self {
        Self::constant(vec![0.0; d])
    }
}

impl VectorField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, x: &[f64]) -> Result<Point> {
        (self.eval)(t, x)
    }

    fn jacobian(&self, t: f64, x: &[f64]) -> Option<Result<Matrix>> {
        self.jacobian.as_ref().map(|j| Ok(j(t, x)))
    }

    fn support(&self) -> Support {
        self.support.clone()
    }
}
