use std::f64::consts::{PI, TAU};

use crate::error::{LabError, Result};
use crate::linalg::{norm, Matrix, Point};
use crate::smooth::{Domain, SmoothMap};

pub const DEFAULT_ANGULAR_MARGIN: f64 = 1e-3;

/// Hyperspherical coordinates (r, φ, θ₁, …, θ_{d−2}) ↦ x with
///
/// x₁ = r sin φ Π sin θ_k, x₂ = r cos φ Π sin θ_k,
/// x_{k+2} = r cos θ_k Π_{m>k} sin θ_m.
///
/// Defined on (a, b) × (0, 2π) × (0, π)^{d−2}, shrunk by angular margins.
#[derive(Debug, Clone)]
pub struct PolarMap {
    d: usize,
    inner: f64,
    outer: f64,
    margin: f64,
}

impl PolarMap {
    pub fn new(d: usize, inner: f64, outer: f64) -> Result<Self> {
        Self::with_margin(d, inner, outer, DEFAULT_ANGULAR_MARGIN)
    }

    pub fn with_margin(d: usize, inner: f64, outer: f64, margin: f64) -> Result<Self> {
        if d < 2 || d > 16 {
            return Err(LabError::Argument(format!("polar coordinates need 2 ≤ d ≤ 16, got {d}")));
        }
        if !(inner >= 0.0 && outer > inner) || !(0.0..0.5).contains(&margin) {
            return Err(LabError::Argument(format!(
                "invalid polar domain: radii ({inner}, {outer}), margin {margin}"
            )));
        }
        Ok(Self { d, inner, outer, margin })
    }

    /// Bounds of the parameter box.
    pub fn parameter_box(&self) -> (Point, Point) {
        let mut lo = vec![self.inner, self.margin];
        let mut hi = vec![self.outer, TAU - self.margin];
        for _ in 2..self.d {
            lo.push(self.margin);
            hi.push(PI - self.margin);
        }
        (lo, hi)
    }

    /// r^{d−1} Π_k sin^k θ_k.
    pub fn det_formula(&self, p: &[f64]) -> f64 {
        let mut det = p[0].powi(self.d as i32 - 1);
        for k in 1..=self.d - 2 {
            det *= p[k + 1].sin().powi(k as i32);
        }
        det
    }

    fn check(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.d {
            return Err(LabError::Argument(format!("expected {} coordinates", self.d)));
        }
        self.domain().check(p)
    }

    /// Suffix products S_k = Π_{m ≥ k} sin θ_m, with S_{d−1} = 1 (θ index 1-based).
    fn sin_suffix(&self, p: &[f64]) -> Vec<f64> {
        let n = self.d - 2;
        let mut s = vec![1.0; n + 2];
        for k in (1..=n).rev() {
            s[k] = s[k + 1] * p[k + 1].sin();
        }
        s
    }
}

impl SmoothMap for PolarMap {
    fn dim(&self) -> usize {
        self.d
    }

    fn domain(&self) -> Domain {
        let (lo, hi) = self.parameter_box();
        Domain::Box { lo, hi }
    }

    fn eval(&self, p: &[f64]) -> Result<Point> {
        self.check(p)?;
        let (r, phi) = (p[0], p[1]);
        let s = self.sin_suffix(p);
        let mut x = vec![r * phi.sin() * s[1], r * phi.cos() * s[1]];
        for k in 1..=self.d - 2 {
            x.push(r * p[k + 1].cos() * s[k + 1]);
        }
        Ok(x)
    }

    fn jacobian(&self, p: &[f64]) -> Result<Matrix> {
        let x = self.eval(p)?;
        let d = self.d;
        let (r, phi) = (p[0], p[1]);
        let s = self.sin_suffix(p);
        let cot = |k: usize| p[k + 1].cos() / p[k + 1].sin();
        let mut jac = Matrix::zeros(d, d);
        for i in 0..d {
            jac[(i, 0)] = x[i] / r;
        }
        jac[(0, 1)] = r * phi.cos() * s[1];
        jac[(1, 1)] = -r * phi.sin() * s[1];
        for m in 1..=d - 2 {
            jac[(0, m + 1)] = x[0] * cot(m);
            jac[(1, m + 1)] = x[1] * cot(m);
        }
        for k in 1..=d - 2 {
            let row = k + 1;
            jac[(row, k + 1)] = -r * p[k + 1].sin() * s[k + 1];
            for m in k + 1..=d - 2 {
                jac[(row, m + 1)] = x[row] * cot(m);
            }
        }
        Ok(jac)
    }

    fn has_inverse(&self) -> bool {
        true
    }

    fn inverse(&self, x: &[f64]) -> Result<Point> {
        if x.len() != self.d {
            return Err(LabError::Argument(format!("expected {} coordinates", self.d)));
        }
        let r = norm(x);
        let mut p = vec![0.0; self.d];
        p[0] = r;
        // peel off θ_{d−2}, …, θ₁ from the last coordinate inwards
        let mut rho = r;
        for k in (1..=self.d - 2).rev() {
            let xk = x[k + 1];
            p[k + 1] = (xk / rho).clamp(-1.0, 1.0).acos();
            rho = (rho * rho - xk * xk).max(0.0).sqrt();
        }
        let mut phi = x[0].atan2(x[1]);
        if phi < 0.0 {
            phi += TAU;
        }
        p[1] = phi;
        self.check(&p)?;
        Ok(p)
    }

    fn log_abs_det_jacobian(&self, p: &[f64]) -> Result<f64> {
        self.check(p)?;
        let mut ld = (self.d as f64 - 1.0) * p[0].ln();
        for k in 1..=self.d - 2 {
            ld += k as f64 * p[k + 1].sin().ln();
        }
        Ok(ld)
    }

    fn name(&self) -> String {
        format!("polar(d={})", self.d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{classify_conformal, classify_oct, interior_points};
    use crate::numerics::fd_jacobian;

    #[test]
    fn determinant_matches_product_formula() {
        for d in 2..=5 {
            let polar = PolarMap::new(d, 0.5, 3.0).unwrap();
            let (lo, hi) = polar.parameter_box();
            for p in interior_points(&lo, &hi, 40, 0.01) {
                let det = polar.jacobian(&p).unwrap().det().abs();
                assert!((det - polar.det_formula(&p)).abs() < 1e-8, "d={d}");
                let ld = polar.log_abs_det_jacobian(&p).unwrap();
                assert!((ld - polar.det_formula(&p).ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn analytic_jacobian_matches_fd_and_inverse_round_trips() {
        for d in 2..=4 {
            let polar = PolarMap::new(d, 0.5, 3.0).unwrap();
            let (lo, hi) = polar.parameter_box();
            for p in interior_points(&lo, &hi, 30, 0.02) {
                let fd = fd_jacobian(&polar, &p, 1e-6).unwrap();
                let an = polar.jacobian(&p).unwrap();
                assert!(fd.max_abs_diff(&an) < 1e-5 * an.max_abs().max(1.0));
                let back = polar.inverse(&polar.eval(&p).unwrap()).unwrap();
                assert!(crate::linalg::dist(&back, &p) < 1e-10, "{p:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn polar_is_oct_but_not_conformal() {
        let polar = PolarMap::new(2, 0.5, 3.0).unwrap();
        let pt = vec![vec![2.0, 1.0]];
        assert!(!classify_conformal(&polar, &pt, 1e-6).unwrap().pass);
        assert!(classify_oct(&polar, &pt, 1e-10).unwrap().pass);
    }

    #[test]
    fn rejects_points_outside_parameter_box() {
        let polar = PolarMap::new(3, 0.5, 3.0).unwrap();
        assert!(polar.eval(&[1.0, 1.0, 0.0]).is_err());
        assert!(polar.eval(&[4.0, 1.0, 1.0]).is_err());
        assert!(PolarMap::new(1, 0.0, 1.0).is_err());
    }
}
