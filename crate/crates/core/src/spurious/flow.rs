use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::Point;
use crate::maps::Offender;
use crate::numerics::rk4_flow;
use crate::smooth::{FieldRef, SmoothMap};

use super::density::DensityField;

const DENSITY_FLOOR: f64 = 1e-12;
const WORST_KEPT: usize = 5;

/// Φ_t of a vector field by fixed-step RK4; the inverse integrates backwards.
#[derive(Clone)]
pub struct FlowMap {
    field: FieldRef,
    t: f64,
    steps: usize,
}

pub fn flow_map(field: FieldRef, t: f64, steps: usize) -> Result<FlowMap> {
    if steps == 0 {
        return Err(LabError::Argument("flow map needs at least one RK4 step".into()));
    }
    if !t.is_finite() {
        return Err(LabError::Argument("flow time must be finite".into()));
    }
    Ok(FlowMap { field, t, steps })
}

impl FlowMap {
    pub fn time(&self) -> f64 {
        self.t
    }
}

impl SmoothMap for FlowMap {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Point> {
        if self.t == 0.0 {
            return Ok(x.to_vec());
        }
        rk4_flow(self.field.as_ref(), x, 0.0, self.t, self.steps)
    }

    fn has_inverse(&self) -> bool {
        true
    }

    fn inverse(&self, y: &[f64]) -> Result<Point> {
        if self.t == 0.0 {
            return Ok(y.to_vec());
        }
        rk4_flow(self.field.as_ref(), y, self.t, 0.0, self.steps)
    }

    fn name(&self) -> String {
        format!("flow(t={})", self.t)
    }
}

/// Pointwise comparison of a pushforward density against a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MptReport {
    pub max_relative_residual: f64,
    pub tol: f64,
    pub pass: bool,
    pub n_points: usize,
    pub worst: Vec<Offender>,
}

/// Checks (f_∗source)(x) = target(x) at each point via
/// source(f⁻¹(x)) · |det Df(f⁻¹(x))|⁻¹, relative to max(target(x), 1e-12).
pub fn verify_pushforward(
    map: &dyn SmoothMap,
    source: &dyn DensityField,
    target: &dyn DensityField,
    points: &[Point],
    tol: f64,
) -> Result<MptReport> {
    if !map.has_inverse() {
        return Err(LabError::Capability(format!("{} has no inverse; cannot check pushforward", map.name())));
    }
    if points.is_empty() {
        return Err(LabError::Argument("pushforward check needs at least one point".into()));
    }
    let mut scored = Vec::with_capacity(points.len());
    for x in points {
        let s = map.inverse(x)?;
        let pushed = source.density(&s) * (-map.log_abs_det_jacobian(&s)?).exp();
        let reference = target.density(x);
        let r = (pushed - reference).abs() / reference.max(DENSITY_FLOOR);
        scored.push((if r.is_nan() { f64::INFINITY } else { r }, x));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let max_relative_residual = scored[0].0;
    Ok(MptReport {
        max_relative_residual,
        tol,
        pass: max_relative_residual <= tol,
        n_points: points.len(),
        worst: scored
            .iter()
            .take(WORST_KEPT)
            .map(|(r, p)| Offender { point: p.to_vec(), residual: *r })
            .collect(),
    })
}

/// `map` preserves `p`: the pushforward of p under map equals p.
pub fn verify_mpt(map: &dyn SmoothMap, p: &dyn DensityField, points: &[Point], tol: f64) -> Result<MptReport> {
    verify_pushforward(map, p, p, points, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dist, Matrix};
    use crate::maps::{interior_points, IdentityMap, LinearMap};
    use crate::smooth::{FnField, FnMap};
    use crate::spurious::{build_xij, Gaussian, GaussianMixture};
    use std::sync::Arc;

    fn mixture_flow(t: f64) -> (FlowMap, Arc<GaussianMixture>) {
        let p = Arc::new(GaussianMixture::three_component_2d());
        let x = build_xij(p.clone(), 0, 1).unwrap().into_ref();
        (flow_map(x, t, 200).unwrap(), p)
    }

    #[test]
    fn time_zero_is_identity() {
        let (f, _) = mixture_flow(0.0);
        assert_eq!(f.eval(&[0.3, -1.2]).unwrap(), vec![0.3, -1.2]);
    }

    #[test]
    fn gaussian_xij_flow_round_trips_and_preserves_volume() {
        let p = Arc::new(Gaussian::standard(2));
        let f = flow_map(build_xij(p, 0, 1).unwrap().into_ref(), 1.0, 200).unwrap();
        let pts = interior_points(&[-2.5, -2.5], &[2.5, 2.5], 100, 0.0);
        for s in &pts {
            let back = f.inverse(&f.eval(s).unwrap()).unwrap();
            assert!(dist(&back, s) < 1e-6);
        }
        let rep = crate::maps::classify_volume_preserving(&f, &pts, 1e-4).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn mixture_flow_preserves_the_mixture() {
        let (f, p) = mixture_flow(0.5);
        let pts = interior_points(&[-3.0, -2.0], &[3.5, 3.5], 200, 0.0);
        let rep = verify_mpt(&f, p.as_ref(), &pts, 1e-3).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn identity_and_scaling() {
        let p = Gaussian::standard(2);
        let pts = interior_points(&[-2.0, -2.0], &[2.0, 2.0], 50, 0.0);
        let rep = verify_mpt(&IdentityMap { dim: 2 }, &p, &pts, 1e-12).unwrap();
        assert_eq!(rep.max_relative_residual, 0.0);
        let scale = LinearMap::new(Matrix::diag(&[2.0, 2.0])).unwrap();
        assert!(!verify_mpt(&scale, &p, &pts, 1e-3).unwrap().pass);
        let target = Gaussian::new(vec![0.0; 2], Matrix::diag(&[4.0, 4.0])).unwrap();
        assert!(verify_pushforward(&scale, &p, &target, &pts, 1e-12).unwrap().pass);
    }

    #[test]
    fn missing_inverse_is_a_capability_error() {
        let f = FnMap::new(2, "square", |x| Ok(x.iter().map(|v| v * v).collect()));
        let err = verify_mpt(&f, &Gaussian::standard(2), &[vec![0.5, 0.5]], 1e-3).unwrap_err();
        assert!(matches!(err, LabError::Capability(_)));
    }

    #[test]
    fn semigroup_property() {
        let p = Arc::new(Gaussian::standard(2));
        let x = build_xij(p, 0, 1).unwrap().into_ref();
        let a = flow_map(x.clone(), 0.4, 400).unwrap();
        let b = flow_map(x.clone(), 0.7, 400).unwrap();
        let ab = flow_map(x, 1.1, 400).unwrap();
        let s = [0.8, -0.3];
        let lhs = a.eval(&b.eval(&s).unwrap()).unwrap();
        assert!(dist(&lhs, &ab.eval(&s).unwrap()) < 1e-6);
    }

    #[test]
    fn blow_up_reports_failure_time() {
        let f = flow_map(Arc::new(FnField::new(1, |_, x| vec![x[0] * x[0]])), 2.0, 1000).unwrap();
        match f.eval(&[1.0]) {
            Err(LabError::Integration { time, .. }) => assert!(time > 0.9 && time < 1.1),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }
}
