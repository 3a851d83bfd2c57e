use crate::error::{LabError, Result};
use crate::linalg::{norm, Matrix, Point};
use crate::smooth::{Domain, SmoothMap};

pub const DEFAULT_R_MIN: f64 = 1e-6;

/// x ↦ b + α A (x − a) / |x − a|^ε with A orthogonal and ε ∈ {0, 2}.
#[derive(Debug, Clone)]
pub struct MoebiusMap {
    b: Point,
    a: Point,
    alpha: f64,
    matrix: Matrix,
    epsilon: u8,
    r_min: f64,
}

impl MoebiusMap {
    pub fn new(b: Point, a: Point, alpha: f64, matrix: Matrix, epsilon: u8) -> Result<Self> {
        let d = a.len();
        if d == 0 || b.len() != d || matrix.rows() != d || matrix.cols() != d {
            return Err(LabError::Argument("Moebius parameters have inconsistent dimensions".into()));
        }
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(LabError::Argument("Moebius scale alpha must be finite and non-zero".into()));
        }
        if epsilon != 0 && epsilon != 2 {
            return Err(LabError::Argument(format!("epsilon must be 0 or 2, got {epsilon}")));
        }
        if !matrix.is_orthogonal(1e-10) {
            return Err(LabError::Argument("Moebius matrix is not orthogonal (‖AᵀA − I‖ > 1e-10)".into()));
        }
        Ok(Self { b, a, alpha, matrix, epsilon, r_min: DEFAULT_R_MIN })
    }

    /// The unit sphere inversion x ↦ x / |x|².
    pub fn inversion(d: usize) -> Self {
        Self::new(vec![0.0; d], vec![0.0; d], 1.0, Matrix::identity(d), 2).expect("valid inversion")
    }

    pub fn with_r_min(mut self, r_min: f64) -> Self {
        self.r_min = r_min;
        self
    }

    pub fn epsilon(&self) -> u8 {
        self.epsilon
    }

    fn offset(&self, x: &[f64]) -> Result<Point> {
        if x.len() != self.a.len() {
            return Err(LabError::Argument(format!("expected {} coordinates", self.a.len())));
        }
        let y: Point = x.iter().zip(&self.a).map(|(v, a)| v - a).collect();
        if self.epsilon == 2 && norm(&y) < self.r_min {
            return Err(LabError::Singularity(format!(
                "point {x:?} within r_min = {} of the inversion centre",
                self.r_min
            )));
        }
        Ok(y)
    }

    /// Value and analytic Jacobian in one pass.
    pub fn eval_and_jacobian(&self, x: &[f64]) -> Result<(Point, Matrix)> {
        let y = self.offset(x)?;
        let d = y.len();
        let ay = self.matrix.matvec(&y);
        if self.epsilon == 0 {
            let value = ay.iter().zip(&self.b).map(|(v, b)| b + self.alpha * v).collect();
            return Ok((value, self.matrix.scale(self.alpha)));
        }
        let r2 = y.iter().map(|v| v * v).sum::<f64>();
        let value = ay.iter().zip(&self.b).map(|(v, b)| b + self.alpha * v / r2).collect();
        // α (A/|y|² − 2 (Ay) ⊗ y / |y|⁴)
        let jac = Matrix::from_fn(d, d, |k, j| {
            self.alpha * (self.matrix[(k, j)] / r2 - 2.0 * ay[k] * y[j] / (r2 * r2))
        });
        Ok((value, jac))
    }
}

impl SmoothMap for MoebiusMap {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn domain(&self) -> Domain {
        if self.epsilon == 2 {
            Domain::Punctured { center: self.a.clone(), radius: self.r_min }
        } else {
            Domain::Whole
        }
    }

    fn eval(&self, x: &[f64]) -> Result<Point> {
        let y = self.offset(x)?;
        let ay = self.matrix.matvec(&y);
        let scale = if self.epsilon == 2 { self.alpha / y.iter().map(|v| v * v).sum::<f64>() } else { self.alpha };
        Ok(ay.iter().zip(&self.b).map(|(v, b)| b + scale * v).collect())
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        Ok(self.eval_and_jacobian(x)?.1)
    }

    fn has_inverse(&self) -> bool {
        true
    }

    fn inverse(&self, target: &[f64]) -> Result<Point> {
        let z: Point = target.iter().zip(&self.b).map(|(v, b)| (v - b) / self.alpha).collect();
        let atz = self.matrix.transpose().matvec(&z);
        let scale = if self.epsilon == 2 {
            let z2 = z.iter().map(|v| v * v).sum::<f64>();
            if z2 == 0.0 {
                return Err(LabError::Singularity("preimage of b under inversion is at infinity".into()));
            }
            1.0 / z2
        } else {
            1.0
        };
        Ok(atz.iter().zip(&self.a).map(|(v, a)| a + scale * v).collect())
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        let y = self.offset(x)?;
        let d = y.len() as f64;
        let base = d * self.alpha.abs().ln();
        if self.epsilon == 2 {
            Ok(base - 2.0 * d * norm(&y).ln())
        } else {
            Ok(base)
        }
    }

    fn name(&self) -> String {
        format!("moebius(eps={})", self.epsilon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::fd_jacobian;

    #[test]
    fn translation_free_identity_case() {
        let m = MoebiusMap::new(vec![0.0; 3], vec![0.0; 3], 1.0, Matrix::identity(3), 0).unwrap();
        let (v, j) = m.eval_and_jacobian(&[3.0, -1.0, 2.0]).unwrap();
        assert_eq!(v, vec![3.0, -1.0, 2.0]);
        assert_eq!(j, Matrix::identity(3));
    }

    #[test]
    fn inversion_value_and_determinant() {
        let m = MoebiusMap::inversion(3);
        let (v, j) = m.eval_and_jacobian(&[2.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, vec![0.5, 0.0, 0.0]);
        assert!((j.det().abs() - 1.0 / 64.0).abs() < 1e-15);
        // Det(Dg) = −|y|^{−2d}: inversion reverses orientation
        assert!(j.det() < 0.0);
        assert!((m.log_abs_det_jacobian(&[2.0, 0.0, 0.0]).unwrap() - (1.0f64 / 64.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn analytic_jacobian_matches_central_differences() {
        let m = MoebiusMap::inversion(3);
        let x = [2.0, 0.0, 0.0];
        let fd = fd_jacobian(&m, &x, 1e-5).unwrap();
        assert!(fd.max_abs_diff(&m.jacobian(&x).unwrap()) < 1e-7);
    }

    #[test]
    fn singularity_and_validation_errors() {
        let m = MoebiusMap::inversion(2);
        assert!(matches!(m.eval(&[1e-7, 0.0]), Err(LabError::Singularity(_))));
        let skew = Matrix::from_rows(&[vec![1.0, 0.1], vec![0.0, 1.0]]).unwrap();
        assert!(MoebiusMap::new(vec![0.0; 2], vec![0.0; 2], 1.0, skew, 2).is_err());
        assert!(MoebiusMap::new(vec![0.0; 2], vec![0.0; 2], 0.0, Matrix::identity(2), 2).is_err());
        assert!(MoebiusMap::new(vec![0.0; 2], vec![0.0; 2], 1.0, Matrix::identity(2), 1).is_err());
    }

    #[test]
    fn inverse_round_trips() {
        let a = Matrix::plane_rotation(3, 0, 2, 0.7);
        let m = MoebiusMap::new(vec![0.3, -1.0, 2.0], vec![0.5, 0.5, 0.5], -1.7, a, 2).unwrap();
        let x = [0.1, 0.9, -0.4];
        let back = m.inverse(&m.eval(&x).unwrap()).unwrap();
        assert!(crate::linalg::dist(&back, &x) < 1e-12);
    }
}
