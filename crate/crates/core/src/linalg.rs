//! Small dense linear algebra for the d ≤ 16 envelope.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// A point in R^d.
pub type Point = Vec<f64>;

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(LabError::Argument("ragged or empty matrix rows".into()));
        }
        Ok(Self { rows: n, cols: m, data: rows.concat() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Rotation by `angle` in the (i, j) coordinate plane.
    pub fn plane_rotation(d: usize, i: usize, j: usize, angle: f64) -> Self {
        let mut m = Self::identity(d);
        let (s, c) = angle.sin_cos();
        m[(i, i)] = c;
        m[(j, j)] = c;
        m[(i, j)] = -s;
        m[(j, i)] = s;
        m
    }

    /// Haar-random orthogonal matrix with determinant +1 (Gram–Schmidt on a Gaussian matrix).
    pub fn random_rotation<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        loop {
            let g = Self::from_fn(d, d, |_, _| rng.sample(StandardNormal));
            if let Some(mut q) = g.orthonormalize_columns() {
                if q.det() < 0.0 {
                    for i in 0..d {
                        q[(i, 0)] = -q[(i, 0)];
                    }
                }
                return q;
            }
        }
    }

    /// Modified Gram–Schmidt on the columns; `None` if they are (numerically) dependent.
    pub fn orthonormalize_columns(&self) -> Option<Self> {
        let mut q = self.clone();
        for j in 0..self.cols {
            for k in 0..j {
                let dot: f64 = (0..self.rows).map(|i| q[(i, j)] * q[(i, k)]).sum();
                for i in 0..self.rows {
                    q[(i, j)] -= dot * q[(i, k)];
                }
            }
            let norm = q.column_norm(j);
            if norm < 1e-10 {
                return None;
            }
            for i in 0..self.rows {
                q[(i, j)] /= norm;
            }
        }
        Some(q)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn column_norm(&self, j: usize) -> f64 {
        (0..self.rows).map(|i| self[(i, j)] * self[(i, j)]).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Point {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Gram matrix AᵀA.
    pub fn gram(&self) -> Self {
        self.transpose().matmul(self)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * k).collect() }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        self.data.iter().zip(&rhs.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// ‖AᵀA − I‖_max ≤ tol.
    pub fn is_orthogonal(&self, tol: f64) -> bool {
        self.is_square() && self.gram().max_abs_diff(&Self::identity(self.rows)) <= tol
    }

    /// Determinant: closed form for d ≤ 3, LU with partial pivoting otherwise.
    pub fn det(&self) -> f64 {
        assert!(self.is_square(), "determinant of non-square matrix");
        let m = |i, j| self[(i, j)];
        match self.rows {
            1 => m(0, 0),
            2 => m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0),
            3 => {
                m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                    - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                    + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
            }
            _ => match Lu::factor(self) {
                Some(lu) => lu.det(),
                None => 0.0,
            },
        }
    }

    /// log|det A|; `-inf` when singular.
    pub fn log_abs_det(&self) -> f64 {
        if self.rows <= 3 {
            return self.det().abs().ln();
        }
        match Lu::factor(self) {
            Some(lu) => lu.log_abs_det(),
            None => f64::NEG_INFINITY,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Point> {
        Lu::factor(self)
            .map(|lu| lu.solve(b))
            .ok_or_else(|| LabError::Singularity("singular matrix in linear solve".into()))
    }

    /// Lower-triangular Cholesky factor L with A = LLᵀ; errors unless A is symmetric positive definite.
    pub fn cholesky(&self) -> Result<Self> {
        let d = self.rows;
        if !self.is_square() || self.max_abs_diff(&self.transpose()) > 1e-12 * self.max_abs().max(1.0) {
            return Err(LabError::Argument("Cholesky needs a symmetric matrix".into()));
        }
        let mut l = Self::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
                if i == j {
                    let v = self[(i, i)] - s;
                    if !(v > 0.0) {
                        return Err(LabError::Argument("matrix is not positive definite".into()));
                    }
                    l[(i, i)] = v.sqrt();
                } else {
                    l[(i, j)] = (self[(i, j)] - s) / l[(j, j)];
                }
            }
        }
        Ok(l)
    }

    pub fn inverse(&self) -> Result<Self> {
        let lu = Lu::factor(self)
            .ok_or_else(|| LabError::Singularity("singular matrix in inversion".into()))?;
        let d = self.rows;
        let mut out = Self::zeros(d, d);
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            let col = lu.solve(&e);
            for i in 0..d {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.rows).map(|i| self.row(i)).collect();
        f.debug_list().entries(rows).finish()
    }
}

/// LU factorization with partial pivoting.
struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    fn factor(a: &Matrix) -> Option<Self> {
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax == 0.0 || !pmax.is_finite() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                for j in k + 1..n {
                    lu[(i, j)] -= factor * lu[(k, j)];
                }
            }
        }
        Some(Self { lu, perm, sign })
    }

    fn det(&self) -> f64 {
        (0..self.lu.rows).map(|i| self.lu[(i, i)]).product::<f64>() * self.sign
    }

    fn log_abs_det(&self) -> f64 {
        (0..self.lu.rows).map(|i| self.lu[(i, i)].abs().ln()).sum()
    }

    fn solve(&self, b: &[f64]) -> Point {
        let n = self.lu.rows;
        let mut x: Point = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
