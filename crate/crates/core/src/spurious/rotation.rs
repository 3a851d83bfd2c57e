use crate::error::{LabError, Result};
use crate::linalg::{norm, Matrix, Point};
use crate::smooth::{Domain, SmoothMap, Support, VectorField};

/// C∞ bump b(u) = exp(1 − 1/(1 − u²)) for |u| < 1, zero otherwise; b(0) = 1.
pub fn smooth_bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// d/du of [`smooth_bump`].
pub fn smooth_bump_derivative(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let w = 1.0 - u * u;
        -2.0 * u / (w * w) * smooth_bump(u)
    }
}

/// Radius-dependent rotation profile R(t, r): a rotation in one coordinate
/// plane by angle θ(t, r) = ω t b(r / ρ), identity for r ≥ ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusRotationProfile {
    center: Point,
    plane: (usize, usize),
    amplitude: f64,
    cutoff: f64,
}

impl RadiusRotationProfile {
    /// `cutoff` must not exceed the distance from `center` to the cube boundary.
    pub fn new(center: Point, plane: (usize, usize), amplitude: f64, cutoff: f64) -> Result<Self> {
        let d = center.len();
        let (i, j) = plane;
        if d < 2 || i >= d || j >= d || i == j {
            return Err(LabError::Argument(format!("invalid rotation plane {plane:?} for d = {d}")));
        }
        let boundary = Self::boundary_distance(&center);
        if !(boundary > 0.0) {
            return Err(LabError::Argument("rotation centre must lie in the open unit cube".into()));
        }
        if !(cutoff > 0.0 && cutoff <= boundary) {
            return Err(LabError::Argument(format!(
                "cutoff radius {cutoff} must lie in (0, dist(a, ∂C) = {boundary}]"
            )));
        }
        if !amplitude.is_finite() {
            return Err(LabError::Argument("rotation amplitude must be finite".into()));
        }
        Ok(Self { center, plane, amplitude, cutoff })
    }

    /// Cutoff = dist(a, ∂C) − margin.
    pub fn with_margin(center: Point, plane: (usize, usize), amplitude: f64, margin: f64) -> Result<Self> {
        let cutoff = Self::boundary_distance(&center) - margin;
        Self::new(center, plane, amplitude, cutoff)
    }

    fn boundary_distance(center: &[f64]) -> f64 {
        center.iter().fold(f64::INFINITY, |m, &a| m.min(a).min(1.0 - a))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn angle(&self, t: f64, r: f64) -> f64 {
        self.amplitude * t * smooth_bump(r / self.cutoff)
    }

    /// ∂θ/∂r divided by r (finite at r = 0).
    fn angle_r_over_r(&self, t: f64, r: f64) -> f64 {
        let u = r / self.cutoff;
        if u >= 1.0 {
            return 0.0;
        }
        let w = 1.0 - u * u;
        -2.0 * self.amplitude * t * smooth_bump(u) / (self.cutoff * self.cutoff * w * w)
    }

    pub fn rotation(&self, t: f64, r: f64) -> Matrix {
        Matrix::plane_rotation(self.dim(), self.plane.0, self.plane.1, self.angle(t, r))
    }

    /// Skew generator G of the rotation plane, dR/dθ = R G.
    fn generator_matrix(&self) -> Matrix {
        let mut g = Matrix::zeros(self.dim(), self.dim());
        g[(self.plane.0, self.plane.1)] = -1.0;
        g[(self.plane.1, self.plane.0)] = 1.0;
        g
    }

    fn offset(&self, s: &[f64]) -> Point {
        s.iter().zip(&self.center).map(|(v, a)| v - a).collect()
    }
}

/// s ↦ R(t, |s − a|)(s − a) + a on the unit cube.
#[derive(Debug, Clone)]
pub struct RadiusRotationMap {
    profile: RadiusRotationProfile,
    t: f64,
}

pub fn radius_rotation_map(profile: &RadiusRotationProfile, t: f64) -> RadiusRotationMap {
    RadiusRotationMap { profile: profile.clone(), t }
}

impl SmoothMap for RadiusRotationMap {
    fn dim(&self) -> usize {
        self.profile.dim()
    }

    fn domain(&self) -> Domain {
        Domain::unit_cube(self.dim())
    }

    fn eval(&self, s: &[f64]) -> Result<Point> {
        self.domain().check(s)?;
        let y = self.profile.offset(s);
        let r = norm(&y);
        if self.profile.angle(self.t, r) == 0.0 {
            // outside the cutoff ball the map is exactly the identity
            return Ok(s.to_vec());
        }
        let ry = self.profile.rotation(self.t, r).matvec(&y);
        Ok(ry.iter().zip(&self.profile.center).map(|(v, a)| v + a).collect())
    }

    /// Dh = R + (θ_r / r) R G y yᵀ.
    fn jacobian(&self, s: &[f64]) -> Result<Matrix> {
        self.domain().check(s)?;
        let y = self.profile.offset(s);
        let r = norm(&y);
        let rot = self.profile.rotation(self.t, r);
        let rgy = rot.matmul(&self.profile.generator_matrix()).matvec(&y);
        let k = self.profile.angle_r_over_r(self.t, r);
        let d = self.dim();
        Ok(Matrix::from_fn(d, d, |i, j| rot[(i, j)] + k * rgy[i] * y[j]))
    }

    fn has_inverse(&self) -> bool {
        true
    }

    fn inverse(&self, x: &[f64]) -> Result<Point> {
        // |h(s) − a| = |s − a|, so the time-reversed rotation undoes it
        radius_rotation_map(&self.profile, -self.t).eval(x)
    }

    fn log_abs_det_jacobian(&self, s: &[f64]) -> Result<f64> {
        self.domain().check(s)?;
        Ok(0.0)
    }

    fn name(&self) -> String {
        "radius_rotation".into()
    }
}

/// Time-independent generator X(x) = ω b(|x − a|/ρ) G (x − a); its time-t
/// flow is exactly the radius rotation map at time t.
#[derive(Debug, Clone)]
pub struct RadiusRotationGenerator {
    profile: RadiusRotationProfile,
}

impl RadiusRotationProfile {
    pub fn generator(&self) -> RadiusRotationGenerator {
        RadiusRotationGenerator { profile: self.clone() }
    }
}

impl VectorField for RadiusRotationGenerator {
    fn dim(&self) -> usize {
        self.profile.dim()
    }

    fn eval(&self, _t: f64, x: &[f64]) -> Result<Point> {
        let y = self.profile.offset(x);
        let w = self.profile.angle(1.0, norm(&y));
        Ok(self.profile.generator_matrix().matvec(&y).iter().map(|v| w * v).collect())
    }

    fn jacobian(&self, _t: f64, x: &[f64]) -> Option<Result<Matrix>> {
        let y = self.profile.offset(x);
        let r = norm(&y);
        let g = self.profile.generator_matrix();
        let gy = g.matvec(&y);
        let w = self.profile.angle(1.0, r);
        let k = self.profile.angle_r_over_r(1.0, r);
        let d = self.dim();
        Some(Ok(Matrix::from_fn(d, d, |i, j| w * g[(i, j)] + k * gy[i] * y[j])))
    }

    fn support(&self) -> Support {
        Support::Ball { center: self.profile.center.clone(), radius: self.profile.cutoff }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{classify_volume_preserving, interior_points};
    use crate::numerics::{fd_jacobian, rk4_flow};

    fn profile(d: usize) -> RadiusRotationProfile {
        let mut c = vec![0.5; d];
        c[0] = 0.45;
        RadiusRotationProfile::with_margin(c, (0, 1), 3.0, 0.05).unwrap()
    }

    #[test]
    fn time_zero_is_identity_and_centre_is_fixed() {
        let p = profile(3);
        let h0 = radius_rotation_map(&p, 0.0);
        let s = [0.3, 0.6, 0.7];
        assert_eq!(h0.eval(&s).unwrap(), s.to_vec());
        let h = radius_rotation_map(&p, 0.8);
        assert_eq!(h.eval(p.center()).unwrap(), p.center().to_vec());
    }

    #[test]
    fn unit_determinant_and_image_in_cube() {
        for d in [2, 3, 4] {
            let p = profile(d);
            for t in [0.3, 1.0, 2.5] {
                let h = radius_rotation_map(&p, t);
                let pts = interior_points(&vec![0.0; d], &vec![1.0; d], 200, 0.001);
                let rep = classify_volume_preserving(&h, &pts, 1e-8).unwrap();
                assert!(rep.pass, "{rep:?}");
                for s in &pts {
                    let x = h.eval(s).unwrap();
                    assert!(x.iter().all(|v| *v > 0.0 && *v < 1.0));
                    let fd = fd_jacobian(&h, s, 1e-6).unwrap();
                    assert!(fd.max_abs_diff(&h.jacobian(s).unwrap()) < 1e-6);
                }
            }
        }
    }

    #[test]
    fn generator_flow_reproduces_map() {
        let p = profile(2);
        let gen = p.generator();
        let s = [0.4, 0.62];
        let flowed = rk4_flow(&gen, &s, 0.0, 0.7, 400).unwrap();
        let direct = radius_rotation_map(&p, 0.7).eval(&s).unwrap();
        assert!(crate::linalg::dist(&flowed, &direct) < 1e-10);
    }

    #[test]
    fn construction_validation() {
        assert!(RadiusRotationProfile::new(vec![0.5, 0.5], (0, 0), 1.0, 0.2).is_err());
        assert!(RadiusRotationProfile::new(vec![0.5, 0.5], (0, 1), 1.0, 0.6).is_err());
        assert!(RadiusRotationProfile::new(vec![1.5, 0.5], (0, 1), 1.0, 0.1).is_err());
    }
}
