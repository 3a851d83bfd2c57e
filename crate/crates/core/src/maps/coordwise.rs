use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::linalg::{Matrix, Point};
use crate::smooth::{Domain, SmoothMap};

/// A strictly increasing C¹ function of one variable with known derivative and inverse.
pub trait Monotone1D: Send + Sync {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    fn inverse(&self, y: f64) -> Result<f64>;
    /// Open interval the function is defined on.
    fn interval(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// x ↦ scale·x + shift, scale > 0.
#[derive(Debug, Clone, Copy)]
pub struct Affine1D {
    pub scale: f64,
    pub shift: f64,
}

impl Monotone1D for Affine1D {
    fn value(&self, x: f64) -> f64 {
        self.scale * x + self.shift
    }
    fn derivative(&self, _x: f64) -> f64 {
        self.scale
    }
    fn inverse(&self, y: f64) -> Result<f64> {
        Ok((y - self.shift) / self.scale)
    }
}

/// x ↦ x + c·x³ with c ≥ 0.
#[derive(Debug, Clone, Copy)]
pub struct CubicShear1D {
    pub c: f64,
}

impl Monotone1D for CubicShear1D {
    fn value(&self, x: f64) -> f64 {
        x + self.c * x * x * x
    }
    fn derivative(&self, x: f64) -> f64 {
        1.0 + 3.0 * self.c * x * x
    }
    fn inverse(&self, y: f64) -> Result<f64> {
        // |x| ≤ |y| since c ≥ 0
        let bound = y.abs() + 1.0;
        let d = |x: f64| self.derivative(x);
        crate::numerics::inverse_monotone(|x| self.value(x), Some(&d), y, -bound, bound, 1e-14)
    }
}

/// x ↦ a·sinh(x / a) + shift.
#[derive(Debug, Clone, Copy)]
pub struct Sinh1D {
    pub a: f64,
    pub shift: f64,
}

impl Monotone1D for Sinh1D {
    fn value(&self, x: f64) -> f64 {
        self.a * (x / self.a).sinh() + self.shift
    }
    fn derivative(&self, x: f64) -> f64 {
        (x / self.a).cosh()
    }
    fn inverse(&self, y: f64) -> Result<f64> {
        Ok(self.a * ((y - self.shift) / self.a).asinh())
    }
}

/// y_i = sign_i · v_{perm[i]}.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPermutation {
    perm: Vec<usize>,
    signs: Vec<f64>,
}

impl SignedPermutation {
    pub fn new(perm: Vec<usize>, signs: Vec<f64>) -> Result<Self> {
        let d = perm.len();
        let mut seen = vec![false; d];
        for &p in &perm {
            if p >= d || std::mem::replace(&mut seen[p], true) {
                return Err(LabError::Argument(format!("{perm:?} is not a permutation")));
            }
        }
        if signs.len() != d || signs.iter().any(|s| s.abs() != 1.0) {
            return Err(LabError::Argument("signs must be ±1, one per coordinate".into()));
        }
        Ok(Self { perm, signs })
    }

    pub fn identity(d: usize) -> Self {
        Self { perm: (0..d).collect(), signs: vec![1.0; d] }
    }

    pub fn apply(&self, v: &[f64]) -> Point {
        self.perm.iter().zip(&self.signs).map(|(&p, s)| s * v[p]).collect()
    }

    pub fn apply_inverse(&self, y: &[f64]) -> Point {
        let mut v = vec![0.0; y.len()];
        for (i, (&p, s)) in self.perm.iter().zip(&self.signs).enumerate() {
            v[p] = s * y[i];
        }
        v
    }

    pub fn matrix(&self) -> Matrix {
        let d = self.perm.len();
        let mut m = Matrix::zeros(d, d);
        for (i, (&p, s)) in self.perm.iter().zip(&self.signs).enumerate() {
            m[(i, p)] = *s;
        }
        m
    }
}

/// h(x) = P·(h₁(x₁), …, h_d(x_d)) for strictly increasing h_i and an optional signed permutation P.
#[derive(Clone)]
pub struct CoordwiseReparam {
    funcs: Vec<Arc<dyn Monotone1D>>,
    perm: Option<SignedPermutation>,
}

impl CoordwiseReparam {
    pub fn new(funcs: Vec<Arc<dyn Monotone1D>>) -> Result<Self> {
        if funcs.is_empty() {
            return Err(LabError::Argument("coordinate-wise map needs at least one function".into()));
        }
        Ok(Self { funcs, perm: None })
    }

    pub fn with_permutation(mut self, perm: SignedPermutation) -> Result<Self> {
        if perm.perm.len() != self.funcs.len() {
            return Err(LabError::Argument("permutation size does not match dimension".into()));
        }
        self.perm = Some(perm);
        Ok(self)
    }

    fn diag(&self, x: &[f64]) -> Result<Point> {
        self.check(x)?;
        let dv: Point = self.funcs.iter().zip(x).map(|(f, &v)| f.derivative(v)).collect();
        if dv.iter().any(|v| !(*v > 0.0)) {
            return Err(LabError::Singularity(format!("non-positive coordinate derivative at {x:?}")));
        }
        Ok(dv)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.funcs.len() {
            return Err(LabError::Argument(format!("expected {} coordinates", self.funcs.len())));
        }
        self.domain().check(x)
    }
}

impl SmoothMap for CoordwiseReparam {
    fn dim(&self) -> usize {
        self.funcs.len()
    }

    fn domain(&self) -> Domain {
        let (lo, hi): (Vec<f64>, Vec<f64>) = self.funcs.iter().map(|f| f.interval()).unzip();
        if lo.iter().chain(&hi).all(|v| v.is_infinite()) {
            Domain::Whole
        } else {
            Domain::Box { lo, hi }
        }
    }

    fn eval(&self, x: &[f64]) -> Result<Point> {
        self.check(x)?;
        let v: Point = self.funcs.iter().zip(x).map(|(f, &v)| f.value(v)).collect();
        Ok(match &self.perm {
            Some(p) => p.apply(&v),
            None => v,
        })
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let diag = Matrix::diag(&self.diag(x)?);
        Ok(match &self.perm {
            Some(p) => p.matrix().matmul(&diag),
            None => diag,
        })
    }

    fn has_inverse(&self) -> bool {
        true
    }

    fn inverse(&self, y: &[f64]) -> Result<Point> {
        let v = match &self.perm {
            Some(p) => p.apply_inverse(y),
            None => y.to_vec(),
        };
        self.funcs.iter().zip(&v).map(|(f, &w)| f.inverse(w)).collect()
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        Ok(self.diag(x)?.iter().map(|v| v.ln()).sum())
    }

    fn name(&self) -> String {
        "coordwise".into()
    }
}
