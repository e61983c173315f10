//! Small dense linear algebra: row-major matrices and a Cholesky factor with
//! a shared jitter-escalation policy.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::{Error, Result};

/// Relative jitter schedule: 0, then 1e-10 … 1e-4 (×10), scaled by trace/n.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
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

    pub fn from_row_slice(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols, "row slice has wrong length");
        Self {
            rows,
            cols,
            data: values.to_vec(),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, a) in self.row(i).iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ v`
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "matvec shape mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn add_to_diagonal(&mut self, value: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += value;
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| f64::max(acc, libm::fabs(a - b)))
    }

    /// Symmetric to within `tol` relative to the largest entry.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v))).max(1e-300);
        for i in 0..self.rows {
            for j in 0..i {
                if libm::fabs(self[(i, j)] - self[(j, i)]) > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Replace with `(A + Aᵀ)/2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Lower-triangular Cholesky factor `A + jitter·I = G Gᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    factor: Matrix,
    jitter: f64,
}

impl Cholesky {
    /// Factor with jitter escalation: no jitter first, then
    /// `1e-10·s, 1e-9·s, …, 1e-4·s` with `s = trace/n`.
    pub fn new(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                found: a.cols(),
            });
        }
        let n = a.rows();
        if n == 0 {
            return Ok(Self {
                factor: Matrix::zeros(0, 0),
                jitter: 0.0,
            });
        }
        if let Some(factor) = factor_exact(a, 0.0) {
            return Ok(Self { factor, jitter: 0.0 });
        }
        let scale = (a.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
        let mut rel = JITTER_START;
        let mut last = 0.0;
        while rel <= JITTER_MAX * (1.0 + 1e-9) {
            let jitter = rel * scale;
            last = jitter;
            if let Some(factor) = factor_exact(a, jitter) {
                return Ok(Self { factor, jitter });
            }
            rel *= 10.0;
        }
        Err(Error::NotPsd { jitter: last })
    }

    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    /// Solve `G y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.factor.row(i);
            let s = dot(&row[..i], &y[..i]);
            y[i] = (y[i] - s) / row[i];
        }
        y
    }

    /// Solve `Gᵀ x = y`.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(y.len(), n);
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.factor[(k, i)] * x[k];
            }
            x[i] = s / self.factor[(i, i)];
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Solve column by column.
    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(b.rows(), b.cols());
        let mut col = vec![0.0; b.rows()];
        for j in 0..b.cols() {
            for i in 0..b.rows() {
                col[i] = b[(i, j)];
            }
            let x = self.solve(&col);
            for i in 0..b.rows() {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    /// `G⁻¹ B` (forward substitution per column).
    pub fn solve_lower_matrix(&self, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(b.rows(), b.cols());
        let mut col = vec![0.0; b.rows()];
        for j in 0..b.cols() {
            for i in 0..b.rows() {
                col[i] = b[(i, j)];
            }
            let x = self.solve_lower(&col);
            for i in 0..b.rows() {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.diag().iter().map(|d| libm::log(*d)).sum::<f64>()
    }

    pub fn inverse(&self) -> Matrix {
        let mut inv = self.solve_matrix(&Matrix::identity(self.dim()));
        inv.symmetrize();
        inv
    }

    /// Reassemble `G Gᵀ` (the jittered matrix).
    pub fn reconstruct(&self) -> Matrix {
        self.factor.matmul(&self.factor.transpose())
    }
}

fn factor_exact(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.rows();
    let mut g = Matrix::zeros(n, n);
    for j in 0..n {
        let gj = g.row(j);
        let mut d = a[(j, j)] + jitter - dot(&gj[..j], &gj[..j]);
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        d = libm::sqrt(d);
        g[(j, j)] = d;
        for i in j + 1..n {
            let s = {
                let (ri, rj) = (g.row(i), g.row(j));
                dot(&ri[..j], &rj[..j])
            };
            g[(i, j)] = (a[(i, j)] - s) / d;
        }
    }
    Some(g)
}

/// A symmetric positive semi-definite matrix together with its (possibly
/// jittered) Cholesky factor.
#[derive(Clone, Debug)]
pub struct PsdMatrix {
    matrix: Matrix,
    cholesky: Cholesky,
}

impl PsdMatrix {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.rows(),
                found: matrix.cols(),
            });
        }
        if !matrix.is_symmetric(1e-10) {
            return Err(Error::InvalidParameter("matrix is not symmetric".into()));
        }
        let cholesky = Cholesky::new(&matrix)?;
        Ok(Self { matrix, cholesky })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.cholesky
    }

    pub fn jitter(&self) -> f64 {
        self.cholesky.jitter
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// Solve `K z = b` through the cached factor.
pub fn cholesky_solve(k: &PsdMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            found: b.len(),
        });
    }
    Ok(k.cholesky.solve(b))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
/// Meant for diagnostics on small matrices.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if libm::fabs(apq) < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = libm::copysign(1.0, theta) / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev = m.diag();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    ev
}
