use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::linalg::{Matrix, Point};
use crate::smooth::{Domain, MapRef, SmoothMap};

/// x ↦ x.
#[derive(Debug, Clone)]
pub struct IdentityMap {
    pub dim: usize,
}

impl SmoothMap for IdentityMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<Point> {
        Ok(x.to_vec())
    }

    fn jacobian(&self, _x: &[f64]) -> Result<Matrix> {
        Ok(Matrix::identity(self.dim))
    }

    fn has_inverse(&self) -> bool {
        true
    }

    fn inverse(&self, y: &[f64]) -> Result<Point> {
        Ok(y.to_vec())
    }

    fn log_abs_det_jacobian(&self, _x: &[f64]) -> Result<f64> {
        Ok(0.0)
    }

    fn name(&self) -> String {
        "identity".into()
    }
}

/// Affine map x ↦ Ax + b with invertible A.
#[derive(Debug, Clone)]
pub struct LinearMap {
    matrix: Matrix,
    offset: Point,
    inverse: Matrix,
    log_abs_det: f64,
}

impl LinearMap {
    pub fn new(matrix: Matrix) -> Result<Self> {
        let d = matrix.rows();
        Self::affine(matrix, vec![0.0; d])
    }

    pub fn affine(matrix: Matrix, offset: Point) -> Result<Self> {
        if !matrix.is_square() || offset.len() != matrix.rows() {
            return Err(LabError::Argument("linear map needs a square matrix and matching offset".into()));
        }
        let inverse = matrix.inverse()?;
        let log_abs_det = matrix.log_abs_det();
        Ok(Self { matrix, offset, inverse, log_abs_det })
    }

    /// Rotation in the (i, j) plane.
    pub fn rotation(d: usize, i: usize, j: usize, angle: f64) -> Self {
        Self::new(Matrix::plane_rotation(d, i, j, angle)).expect("rotations are invertible")
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }
}

impl SmoothMap for LinearMap {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }

    fn eval(&self, x: &[f64]) -> Result<Point> {
        let mut y = self.matrix.matvec(x);
        y.iter_mut().zip(&self.offset).for_each(|(v, b)| *v += b);
        Ok(y)
    }

    fn jacobian(&self, _x: &[f64]) -> Result<Matrix> {
        Ok(self.matrix.clone())
    }

    fn has_inverse(&self) -> bool {
        true
    }

    fn inverse(&self, y: &[f64]) -> Result<Point> {
        let shifted: Point = y.iter().zip(&self.offset).map(|(v, b)| v - b).collect();
        Ok(self.inverse.matvec(&shifted))
    }

    fn log_abs_det_jacobian(&self, _x: &[f64]) -> Result<f64> {
        Ok(self.log_abs_det)
    }

    fn name(&self) -> String {
        "linear".into()
    }
}

/// `outer ∘ inner`.
pub struct Composed {
    outer: MapRef,
    inner: MapRef,
}

/// Composition with chain-rule Jacobian, reversed inverse and additive log-determinant.
pub fn compose(outer: MapRef, inner: MapRef) -> Result<Composed> {
    if outer.dim() != inner.dim() {
        return Err(LabError::Argument(format!(
            "cannot compose maps of dimension {} and {}",
            outer.dim(),
            inner.dim()
        )));
    }
    Ok(Composed { outer, inner })
}

impl Composed {
    pub fn into_ref(self) -> MapRef {
        Arc::new(self)
    }
}

impl SmoothMap for Composed {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn domain(&self) -> Domain {
        self.inner.domain()
    }

    fn eval(&self, x: &[f64]) -> Result<Point> {
        self.outer.eval(&self.inner.eval(x)?)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let y = self.inner.eval(x)?;
        Ok(self.outer.jacobian(&y)?.matmul(&self.inner.jacobian(x)?))
    }

    fn has_inverse(&self) -> bool {
        self.outer.has_inverse() && self.inner.has_inverse()
    }

    fn inverse(&self, y: &[f64]) -> Result<Point> {
        self.inner.inverse(&self.outer.inverse(y)?)
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        let y = self.inner.eval(x)?;
        Ok(self.outer.log_abs_det_jacobian(&y)? + self.inner.log_abs_det_jacobian(x)?)
    }

    fn name(&self) -> String {
        format!("{}∘{}", self.outer.name(), self.inner.name())
    }
}

/// Block-diagonal concatenation of 2D conformal maps: map k acts on
/// coordinates (2k, 2k+1).
pub struct ConcatConformal2D {
    blocks: Vec<MapRef>,
}

impl ConcatConformal2D {
    pub fn new(blocks: Vec<MapRef>) -> Result<Self> {
        if blocks.is_empty() || blocks.iter().any(|b| b.dim() != 2) {
            return Err(LabError::Argument("concatenation needs one or more 2D maps".into()));
        }
        Ok(Self { blocks })
    }

    fn each_block<T>(&self, x: &[f64], mut f: impl FnMut(&MapRef, &[f64]) -> Result<T>) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(LabError::Argument(format!("expected {} coordinates", self.dim())));
        }
        self.blocks.iter().enumerate().map(|(k, b)| f(b, &x[2 * k..2 * k + 2])).collect()
    }
}

impl SmoothMap for ConcatConformal2D {
    fn dim(&self) -> usize {
        2 * self.blocks.len()
    }

    fn eval(&self, x: &[f64]) -> Result<Point> {
        Ok(self.each_block(x, |b, xs| b.eval(xs))?.concat())
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let blocks = self.each_block(x, |b, xs| b.jacobian(xs))?;
        let mut jac = Matrix::zeros(self.dim(), self.dim());
        for (k, block) in blocks.iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    jac[(2 * k + i, 2 * k + j)] = block[(i, j)];
                }
            }
        }
        Ok(jac)
    }

    fn has_inverse(&self) -> bool {
        self.blocks.iter().all(|b| b.has_inverse())
    }

    fn inverse(&self, y: &[f64]) -> Result<Point> {
        Ok(self.each_block(y, |b, ys| b.inverse(ys))?.concat())
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        Ok(self.each_block(x, |b, xs| b.log_abs_det_jacobian(xs))?.iter().sum())
    }

    fn name(&self) -> String {
        "concat_conformal".into()
    }
}
