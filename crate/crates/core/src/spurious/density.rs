use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};
use crate::linalg::{Matrix, Point};

/// A probability density on R^d with analytic gradient.
pub trait DensityField: Send + Sync {
    fn dim(&self) -> usize;
    fn density(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Point;
    fn log_density(&self, x: &[f64]) -> f64 {
        self.density(x).ln()
    }
}

/// Multivariate normal N(mean, cov).
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Point,
    precision: Matrix,
    chol: Matrix,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: Point, cov: Matrix) -> Result<Self> {
        if cov.rows() != mean.len() {
            return Err(LabError::Argument("covariance does not match mean dimension".into()));
        }
        let chol = cov.cholesky()?;
        let precision = cov.inverse()?;
        let d = mean.len() as f64;
        let log_det: f64 = (0..mean.len()).map(|i| 2.0 * chol[(i, i)].ln()).sum();
        let log_norm = -0.5 * (d * (2.0 * PI).ln() + log_det);
        Ok(Self { mean, precision, chol, log_norm })
    }

    pub fn standard(d: usize) -> Self {
        Self::new(vec![0.0; d], Matrix::identity(d)).expect("identity covariance")
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn whitened(&self, x: &[f64]) -> (Point, f64) {
        let diff: Point = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let pd = self.precision.matvec(&diff);
        let quad = diff.iter().zip(&pd).map(|(a, b)| a * b).sum::<f64>();
        (pd, quad)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let z: Point = (0..self.mean.len()).map(|_| rng.sample(StandardNormal)).collect();
        let lz = self.chol.matvec(&z);
        lz.iter().zip(&self.mean).map(|(a, m)| a + m).collect()
    }
}

impl DensityField for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    fn gradient(&self, x: &[f64]) -> Point {
        let (pd, quad) = self.whitened(x);
        let p = (self.log_norm - 0.5 * quad).exp();
        pd.iter().map(|v| -p * v).collect()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.whitened(x).1
    }
}

/// Finite mixture Σ w_k N(μ_k, Σ_k) with weights normalized at construction.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(LabError::Argument("mixture needs one weight per component".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(LabError::Argument("mixture weights must be positive".into()));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(LabError::Argument("mixture components differ in dimension".into()));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self { weights: weights.iter().map(|w| w / total).collect(), components })
    }

    /// Three well-separated anisotropic components in the plane.
    pub fn three_component_2d() -> Self {
        let c = |m: [f64; 2], rows: [[f64; 2]; 2]| {
            Gaussian::new(m.to_vec(), Matrix::from_rows(&[rows[0].to_vec(), rows[1].to_vec()]).unwrap()).unwrap()
        };
        Self::new(
            vec![0.5, 0.3, 0.2],
            vec![
                c([0.0, 0.0], [[1.0, 0.3], [0.3, 0.6]]),
                c([2.0, 1.0], [[0.5, -0.1], [-0.1, 0.4]]),
                c([-1.5, 1.5], [[0.3, 0.0], [0.0, 0.8]]),
            ],
        )
        .unwrap()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (w, c) in self.weights.iter().zip(&self.components) {
            acc += w;
            if u < acc {
                return c.sample(rng);
            }
        }
        self.components.last().unwrap().sample(rng)
    }
}

impl DensityField for GaussianMixture {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(&self.components).map(|(w, c)| w * c.density(x)).sum()
    }

    fn gradient(&self, x: &[f64]) -> Point {
        let mut g = vec![0.0; x.len()];
        for (w, c) in self.weights.iter().zip(&self.components) {
            for (gi, ci) in g.iter_mut().zip(c.gradient(x)) {
                *gi += w * ci;
            }
        }
        g
    }
}

/// Uniform density on the open unit cube.
#[derive(Debug, Clone, Copy)]
pub struct UniformCube {
    pub dim: usize,
}

impl DensityField for UniformCube {
    fn dim(&self) -> usize {
        self.dim
    }

    fn density(&self, x: &[f64]) -> f64 {
        if x.iter().all(|v| *v > 0.0 && *v < 1.0) {
            1.0
        } else {
            0.0
        }
    }

    fn gradient(&self, x: &[f64]) -> Point {
        vec![0.0; x.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(p: &dyn DensityField, x: &[f64]) -> Point {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (p.density(&a) - p.density(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn standard_normal_value_at_unit_point() {
        let g = Gaussian::standard(2);
        assert!((g.density(&[1.0, 0.0]) - (-0.5f64).exp() / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mix = GaussianMixture::three_component_2d();
        for x in [[0.1, 0.2], [1.5, -0.3], [-1.0, 1.7]] {
            let an = mix.gradient(&x);
            let fd = fd_grad(&mix, &x);
            for (a, f) in an.iter().zip(&fd) {
                assert!((a - f).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn mixture_integrates_to_one() {
        // midpoint rule on a wide box
        let mix = GaussianMixture::three_component_2d();
        let n = 400;
        let (lo, hi) = (-9.0, 9.0);
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
                total += mix.density(&x) * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Gaussian::new(vec![0.0; 2], Matrix::diag(&[1.0, -1.0])).is_err());
        assert!(GaussianMixture::new(vec![1.0, -1.0], vec![Gaussian::standard(1), Gaussian::standard(1)]).is_err());
    }
}
