//! Scalar diagnostics: the C_OCT contrast, L1 reconstruction error and a
//! Monte Carlo forward KL estimator.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{dist, Matrix, Point};
use crate::numerics::mean_and_stderr;
use crate::smooth::SmoothMap;
use crate::spurious::{DensityField, Gaussian, GaussianMixture};

pub const COLUMN_NORM_FLOOR: f64 = 1e-150;
pub const MAX_EXCLUDED_FRACTION: f64 = 0.01;
pub const DEFAULT_C_OCT_SAMPLES: usize = 4096;
pub const DEFAULT_MC_SAMPLES: usize = 8192;
pub const MIN_KL_SAMPLES: usize = 100;

/// n points of one dimension, optionally with their log-density under the sampling law.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    points: Vec<Point>,
    log_density: Option<Vec<f64>>,
}

impl SampleBatch {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(LabError::Argument("sample batch must be nonempty".into()));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(LabError::Argument("sample batch mixes dimensions".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(LabError::Argument("sample batch contains non-finite coordinates".into()));
        }
        Ok(Self { points, log_density: None })
    }

    pub fn with_log_density(mut self, log_density: Vec<f64>) -> Result<Self> {
        if log_density.len() != self.points.len() || log_density.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Argument("log-densities must be finite, one per point".into()));
        }
        self.log_density = Some(log_density);
        Ok(self)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn log_density(&self) -> Option<&[f64]> {
        self.log_density.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub n_samples: usize,
    /// Points dropped because the integrand was undefined there.
    pub excluded: usize,
}

/// Serialized form `{metric, value, stderr, n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MetricEstimate {
    fn from_values(values: &[f64], excluded: usize) -> Self {
        let (value, standard_error) = mean_and_stderr(values);
        Self { value, standard_error, n_samples: values.len(), excluded }
    }

    pub fn record(&self, metric: &str) -> MetricRecord {
        MetricRecord { metric: metric.into(), value: self.value, stderr: self.standard_error, n: self.n_samples }
    }

    /// |value − reference| ≤ k · standard_error (with a tiny absolute floor for exact estimates).
    pub fn within_stderr(&self, reference: f64, k: f64) -> bool {
        (self.value - reference).abs() <= k * self.standard_error + 1e-12
    }
}

fn check_exclusions(excluded: usize, total: usize, what: &str) -> Result<()> {
    if excluded as f64 > MAX_EXCLUDED_FRACTION * total as f64 {
        return Err(LabError::Estimation(format!(
            "{what}: {excluded} of {total} points excluded (more than {:.0}%)",
            100.0 * MAX_EXCLUDED_FRACTION
        )));
    }
    Ok(())
}

/// Σ_k log‖J e_k‖ − log|det J|; non-negative by Hadamard's inequality and zero
/// exactly when the columns are orthogonal.
pub fn c_oct_pointwise(jac: &Matrix) -> Result<f64> {
    if !jac.is_square() {
        return Err(LabError::Argument("C_OCT needs a square Jacobian".into()));
    }
    let mut log_norms = 0.0;
    for k in 0..jac.cols() {
        let n = jac.column_norm(k);
        if !(n > COLUMN_NORM_FLOOR) || !n.is_finite() {
            return Err(LabError::Singularity(format!("column {k} has norm {n:e}")));
        }
        log_norms += n.ln();
    }
    let log_det = jac.log_abs_det();
    if !log_det.is_finite() {
        return Err(LabError::Singularity("Jacobian is singular".into()));
    }
    // rounding can push an exactly orthogonal case a few ulps below zero
    Ok((log_norms - log_det).max(0.0))
}

/// Monte Carlo mean of the pointwise contrast of Df over the samples.
pub fn c_oct(f: &dyn SmoothMap, samples: &SampleBatch) -> Result<MetricEstimate> {
    let mut values = Vec::with_capacity(samples.len());
    let mut excluded = 0;
    for s in samples.points() {
        match f.jacobian(s).and_then(|j| c_oct_pointwise(&j)) {
            Ok(v) => values.push(v),
            Err(LabError::Singularity(_)) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    check_exclusions(excluded, samples.len(), "c_oct")?;
    Ok(MetricEstimate::from_values(&values, excluded))
}

/// Monte Carlo mean of |g_inv(f_t(s)) − s|; points where either map is
/// undefined are excluded and counted.
pub fn l1_recon(g_inv: &dyn SmoothMap, f_t: &dyn SmoothMap, samples: &SampleBatch) -> Result<MetricEstimate> {
    let mut values = Vec::with_capacity(samples.len());
    let mut excluded = 0;
    for s in samples.points() {
        match f_t.eval(s).and_then(|x| g_inv.eval(&x)) {
            Ok(r) => values.push(dist(&r, s)),
            Err(LabError::Domain(_)) | Err(LabError::Singularity(_)) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    if values.is_empty() {
        return Err(LabError::Estimation("l1_recon: every sample was outside the domain".into()));
    }
    Ok(MetricEstimate::from_values(&values, excluded))
}

/// A distribution that can be sampled and whose log-density is known.
pub trait SampleTarget: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut dyn RngCore) -> Point;
    fn log_density(&self, x: &[f64]) -> f64;
}

impl SampleTarget for Gaussian {
    fn dim(&self) -> usize {
        DensityField::dim(self)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Point {
        Gaussian::sample(self, rng)
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        DensityField::log_density(self, x)
    }
}

impl SampleTarget for GaussianMixture {
    fn dim(&self) -> usize {
        DensityField::dim(self)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Point {
        GaussianMixture::sample(self, rng)
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        DensityField::log_density(self, x)
    }
}

/// D_KL(q ‖ p) ≈ mean of log q(x) − log p(x) over n draws x ~ q.
pub fn forward_kl(
    target: &dyn SampleTarget,
    model_log_density: &dyn Fn(&[f64]) -> f64,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<MetricEstimate> {
    if n < MIN_KL_SAMPLES {
        return Err(LabError::Argument(format!("forward_kl needs at least {MIN_KL_SAMPLES} samples, got {n}")));
    }
    let mut values = Vec::with_capacity(n);
    let mut excluded = 0;
    for _ in 0..n {
        let x = target.sample(rng);
        let v = target.log_density(&x) - model_log_density(&x);
        if v.is_finite() {
            values.push(v);
        } else {
            excluded += 1;
        }
    }
    check_exclusions(excluded, n, "forward_kl")?;
    Ok(MetricEstimate::from_values(&values, excluded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{interior_points, IdentityMap, LinearMap, MoebiusMap, PolarMap};
    use crate::smooth::FnMap;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{LN_2, PI};

    fn shear() -> Matrix {
        Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn pointwise_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = Matrix::random_rotation(4, &mut rng);
        assert!(c_oct_pointwise(&q).unwrap() < 1e-12);
        assert!((c_oct_pointwise(&shear()).unwrap() - 0.5 * LN_2).abs() < 1e-12);
        assert_eq!(c_oct_pointwise(&Matrix::diag(&[2.0, 3.0])).unwrap(), 0.0);
        let singular = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(c_oct_pointwise(&singular), Err(LabError::Singularity(_))));
        assert!(matches!(c_oct_pointwise(&Matrix::diag(&[1.0, 0.0])), Err(LabError::Singularity(_))));
    }

    fn uniform_batch(lo: &[f64], hi: &[f64], n: usize) -> SampleBatch {
        SampleBatch::new(interior_points(lo, hi, n, 0.01)).unwrap()
    }

    #[test]
    fn contrast_vanishes_on_oct_maps() {
        let polar = PolarMap::new(3, 0.5, 2.0).unwrap();
        let (lo, hi) = polar.parameter_box();
        let est = c_oct(&polar, &uniform_batch(&lo, &hi, 1000)).unwrap();
        assert!(est.value < 1e-8, "{est:?}");
        let moebius = MoebiusMap::inversion(3);
        let est = c_oct(&moebius, &uniform_batch(&[0.2; 3], &[2.0; 3], 1000)).unwrap();
        assert!(est.value < 1e-7, "{est:?}");
    }

    #[test]
    fn constant_jacobian_has_zero_stderr() {
        let f = LinearMap::new(shear()).unwrap();
        let est = c_oct(&f, &uniform_batch(&[-1.0; 2], &[1.0; 2], 200)).unwrap();
        assert!((est.value - 0.5 * LN_2).abs() < 1e-12);
        assert!(est.standard_error < 1e-15);
    }

    #[test]
    fn too_many_singular_points_is_an_estimation_error() {
        let f = FnMap::new(2, "fold", |x| Ok(vec![x[0] * x[0], x[1]]))
            .with_jacobian(|x| Ok(Matrix::diag(&[2.0 * x[0], 1.0])));
        let pts: Vec<Point> = (0..100).map(|k| vec![if k < 5 { 0.0 } else { 1.0 }, 0.5]).collect();
        assert!(matches!(c_oct(&f, &SampleBatch::new(pts).unwrap()), Err(LabError::Estimation(_))));
        let pts: Vec<Point> = (0..200).map(|k| vec![if k < 1 { 0.0 } else { 1.0 }, 0.5]).collect();
        assert_eq!(c_oct(&f, &SampleBatch::new(pts).unwrap()).unwrap().excluded, 1);
    }

    fn normal_batch(n: usize, seed: u64) -> SampleBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Gaussian::standard(2);
        SampleBatch::new((0..n).map(|_| g.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn l1_examples() {
        let batch = normal_batch(2000, 2);
        let f = LinearMap::rotation(2, 0, 1, 0.7);
        let f_inv = FnMap::new(2, "inv", move |x| LinearMap::rotation(2, 0, 1, -0.7).eval(x));
        assert!(l1_recon(&f_inv, &f, &batch).unwrap().value < 1e-12);

        let shift = LinearMap::affine(Matrix::identity(2), vec![1.0, 0.0]).unwrap();
        let est = l1_recon(&IdentityMap { dim: 2 }, &shift, &batch).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l1_rotation_ambiguity() {
        // |R⁻¹s − s| = √2 |s| for a quarter turn; E|s| = √(π/2) in d = 2
        let batch = normal_batch(100_000, 3);
        let f = LinearMap::new(Matrix::diag(&[2.0, 0.5])).unwrap();
        let g_inv = FnMap::new(2, "rotated inverse", |x| {
            let s = [x[0] / 2.0, x[1] / 0.5];
            LinearMap::rotation(2, 0, 1, -PI / 2.0).eval(&s)
        });
        let est = l1_recon(&g_inv, &f, &batch).unwrap();
        let exact = PI.sqrt();
        assert!(est.within_stderr(exact, 3.0), "{est:?} vs {exact}");
        // brute force oracle on the same draws
        let brute: f64 = batch.points().iter().map(|s| 2f64.sqrt() * crate::linalg::norm(s)).sum::<f64>()
            / batch.len() as f64;
        assert!((est.value - brute).abs() < 1e-9);
    }

    #[test]
    fn forward_kl_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = Gaussian::standard(1);
        let same = forward_kl(&q, &|x| DensityField::log_density(&q, x), 10_000, &mut rng).unwrap();
        assert!(same.value.abs() < 1e-15 && same.standard_error < 1e-15);

        let p = Gaussian::new(vec![0.5], Matrix::identity(1)).unwrap();
        let est = forward_kl(&q, &|x| DensityField::log_density(&p, x), 100_000, &mut rng).unwrap();
        assert!(est.within_stderr(0.125, 3.0), "{est:?}");

        // ½[tr(Σp⁻¹Σq) − d + ln(det Σp / det Σq)] with Σp = 4I, d = 2
        let q2 = Gaussian::standard(2);
        let p2 = Gaussian::new(vec![0.0; 2], Matrix::diag(&[4.0, 4.0])).unwrap();
        let exact = 0.5 * (0.5 - 2.0 + 16f64.ln());
        let est = forward_kl(&q2, &|x| DensityField::log_density(&p2, x), 100_000, &mut rng).unwrap();
        assert!(est.within_stderr(exact, 3.0), "{est:?} vs {exact}");
    }

    #[test]
    fn forward_kl_rejects_small_n_and_bad_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = Gaussian::standard(1);
        assert!(forward_kl(&q, &|_| 0.0, 50, &mut rng).is_err());
        let err = forward_kl(&q, &|x| if x[0] > 0.0 { f64::NEG_INFINITY } else { 0.0 }, 1000, &mut rng);
        assert!(matches!(err, Err(LabError::Estimation(_))));
    }
}
