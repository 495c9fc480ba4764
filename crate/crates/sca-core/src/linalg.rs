//! Dense row-major matrices and the few kernels the solvers need:
//! symmetric (Cholesky) solves, Gram products, and power iteration.

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::math;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Mat> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: "matrix buffer",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `A v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            out[i] = dot(self.row(i), v);
        }
        out
    }

    /// `A^T v`.
    pub fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            axpy(v[i], self.row(i), &mut out);
        }
        out
    }

    /// `A^T A` (cols x cols), exploiting symmetry.
    pub fn gram(&self) -> Mat {
        let n = self.cols;
        let mut g = Mat::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                for j in i..n {
                    g.data[i * n + j] += ri * row[j];
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                g.data[j * n + i] = g.data[i * n + j];
            }
        }
        g
    }

    /// `A A^T` (rows x rows).
    pub fn outer_gram(&self) -> Mat {
        let n = self.rows;
        let mut g = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = dot(self.row(i), self.row(j));
                g.data[i * n + j] = v;
                g.data[j * n + i] = v;
            }
        }
        g
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// `self += s * other`; shapes must match.
    pub fn add_scaled(&mut self, other: &Mat, s: f64) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    pub fn add_scaled_identity(&mut self, s: f64) {
        debug_assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            self.data[i * self.cols + i] += s;
        }
    }

    /// Columns `idx` of `self`, in the given order.
    pub fn gather_columns(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            let src = self.row(i);
            let dst = out.row_mut(i);
            for (t, &j) in idx.iter().enumerate() {
                dst[t] = src[j];
            }
        }
        out
    }

    /// Principal submatrix on index set `idx` (rows and columns).
    pub fn principal_submatrix(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            let src = self.row(i);
            let dst = out.row_mut(a);
            for (b, &j) in idx.iter().enumerate() {
                dst[b] = src[j];
            }
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `y += a * x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for i in 0..x.len() {
        y[i] += a * x[i];
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    math::sqrt(dot(v, v))
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky {
    l: Mat,
}

impl Cholesky {
    pub fn new(a: &Mat) -> Result<Cholesky> {
        debug_assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                let ljk = l.get(j, k);
                d -= ljk * ljk;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let dj = math::sqrt(d);
            l.set(j, j, dj);
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / dj);
            }
        }
        Ok(Cholesky { l })
    }

    /// Solves `A x = b` using the stored factor.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        debug_assert_eq!(b.len(), n);
        // forward: L y = b
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l.get(i, k) * y[k];
            }
            y[i] /= self.l.get(i, i);
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.l.get(k, i) * y[k];
            }
            y[i] /= self.l.get(i, i);
        }
        y
    }
}

/// Solves symmetric positive definite `A x = b`.
pub fn solve_spd(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    Ok(Cholesky::new(a)?.solve(b))
}

/// Largest eigenvalue of a symmetric PSD operator given by `op`, estimated
/// by power iteration from a fixed seeded start vector. Errors if the
/// Rayleigh quotient turns significantly negative.
pub fn power_iteration_max_eig<F>(op: F, dim: usize, max_iters: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    debug_assert!(dim > 0);
    let mut rng = ChaCha20Rng::seed_from_u64(0x5ca1_ab1e);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nv = norm2(&v);
    if nv == 0.0 {
        v[0] = 1.0;
    } else {
        for x in &mut v {
            *x /= nv;
        }
    }
    let mut eig = 0.0;
    for _ in 0..max_iters {
        let av = op(&v);
        let rayleigh = dot(&v, &av);
        let n = norm2(&av);
        if rayleigh < -1e-10 * (1.0 + n) {
            return Err(Error::NegativeCurvature);
        }
        if n <= f64::MIN_POSITIVE {
            return Ok(0.0); // operator annihilates the probe: zero matrix
        }
        let changed = (rayleigh - eig).abs();
        eig = rayleigh;
        v = av;
        for x in &mut v {
            *x /= n;
        }
        if changed <= 1e-9 * (1.0 + eig.abs()) {
            break;
        }
    }
    Ok(eig.max(0.0))
}
