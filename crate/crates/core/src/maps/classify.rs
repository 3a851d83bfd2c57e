use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{Matrix, Point};
use crate::numerics::halton_point;
use crate::smooth::SmoothMap;

const WORST_KEPT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapClass {
    Conformal,
    Oct,
    VolumePreserving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub point: Point,
    pub residual: f64,
}

/// Outcome of testing a Jacobian constraint over a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: MapClass,
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
    pub n_points: usize,
    /// Highest-residual points, worst first.
    pub worst: Vec<Offender>,
}

fn classify(
    class: MapClass,
    f: &dyn SmoothMap,
    points: &[Point],
    tol: f64,
    residual: impl Fn(&Matrix) -> f64,
) -> Result<ClassReport> {
    if points.is_empty() {
        return Err(LabError::Argument("classification needs at least one test point".into()));
    }
    let mut scored = Vec::with_capacity(points.len());
    for p in points {
        let r = residual(&f.jacobian(p)?);
        // NaN residuals must fail the test
        scored.push((if r.is_nan() { f64::INFINITY } else { r }, p));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let max_residual = scored[0].0;
    Ok(ClassReport {
        class,
        max_residual,
        tol,
        pass: max_residual <= tol,
        n_points: points.len(),
        worst: scored
            .iter()
            .take(WORST_KEPT)
            .map(|(r, p)| Offender { point: p.to_vec(), residual: *r })
            .collect(),
    })
}

/// ‖DfᵀDf − λI‖_max / max(1, λ) with λ = tr(DfᵀDf)/d.
pub fn conformal_residual(jac: &Matrix) -> f64 {
    let g = jac.gram();
    let d = g.rows();
    let lambda = g.trace() / d as f64;
    g.max_abs_diff(&Matrix::identity(d).scale(lambda)) / lambda.max(1.0)
}

/// Largest |cos| between distinct Jacobian columns.
pub fn oct_residual(jac: &Matrix) -> f64 {
    let g = jac.gram();
    let d = g.rows();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in i + 1..d {
            let denom = (g[(i, i)] * g[(j, j)]).sqrt();
            worst = worst.max(if denom > 0.0 { g[(i, j)].abs() / denom } else { f64::INFINITY });
        }
    }
    worst
}

pub fn classify_conformal(f: &dyn SmoothMap, points: &[Point], tol: f64) -> Result<ClassReport> {
    classify(MapClass::Conformal, f, points, tol, conformal_residual)
}

pub fn classify_oct(f: &dyn SmoothMap, points: &[Point], tol: f64) -> Result<ClassReport> {
    classify(MapClass::Oct, f, points, tol, oct_residual)
}

/// Residual |det Df − 1|.
pub fn classify_volume_preserving(f: &dyn SmoothMap, points: &[Point], tol: f64) -> Result<ClassReport> {
    classify(MapClass::VolumePreserving, f, points, tol, |j| (j.det() - 1.0).abs())
}

/// `n` Halton points in the box [lo, hi], kept a relative `margin` away from its faces.
pub fn interior_points(lo: &[f64], hi: &[f64], n: usize, margin: f64) -> Vec<Point> {
    let d = lo.len();
    (1..=n as u64)
        .map(|k| {
            halton_point(k, d)
                .iter()
                .enumerate()
                .map(|(i, u)| lo[i] + (margin + (1.0 - 2.0 * margin) * u) * (hi[i] - lo[i]))
                .collect()
        })
        .collect()
}

/// 5^d cell-centred grid for d ≤ 3, 500 Halton points otherwise.
pub fn default_test_points(lo: &[f64], hi: &[f64]) -> Vec<Point> {
    let d = lo.len();
    if d > 3 {
        return interior_points(lo, hi, 500, 0.01);
    }
    let n = 5usize;
    (0..n.pow(d as u32))
        .map(|mut k| {
            (0..d)
                .map(|i| {
                    let idx = k % n;
                    k /= n;
                    lo[i] + (idx as f64 + 0.5) / n as f64 * (hi[i] - lo[i])
                })
                .collect()
        })
        .collect()
}
