//! Dense row-major matrices and the handful of kernels everything builds on.

use crate::scalar::Scalar;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense matrix, row-major storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    /// Build from row-major data. Errors when the length is inconsistent or
    /// any entry is non-finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Contract("matrix entries must be finite".into()));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Mat {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// 1xN row vector.
    pub fn row(values: &[T]) -> Self {
        Mat {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    /// Nx1 column vector.
    pub fn col(values: &[T]) -> Self {
        Mat {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Scalar value of a 1x1 matrix.
    pub fn scalar(&self) -> Result<T> {
        if self.rows == 1 && self.cols == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Shape(format!(
                "expected 1x1 scalar, got {}x{}",
                self.rows, self.cols
            )))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// out = self @ rhs.
    pub fn matmul(&self, rhs: &Mat<T>) -> Result<Mat<T>> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "matmul: lhs {}x{} incompatible with rhs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let (m, k, n) = (self.rows, self.cols, rhs.cols);
        let mut out = Mat::zeros(m, n);
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                let row_rhs = &rhs.data[p * n..(p + 1) * n];
                let row_out = &mut out.data[i * n..(i + 1) * n];
                for j in 0..n {
                    row_out[j] += a * row_rhs[j];
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add(&self, rhs: &Mat<T>) -> Result<Mat<T>> {
        self.zip_with(rhs, |a, b| a + b, "add")
    }

    pub fn sub(&self, rhs: &Mat<T>) -> Result<Mat<T>> {
        self.zip_with(rhs, |a, b| a - b, "sub")
    }

    pub fn mul_elem(&self, rhs: &Mat<T>) -> Result<Mat<T>> {
        self.zip_with(rhs, |a, b| a * b, "mul_elem")
    }

    pub fn scale(&self, c: T) -> Mat<T> {
        self.map(|x| x * c)
    }

    fn zip_with(&self, rhs: &Mat<T>, f: impl Fn(T, T) -> T, what: &str) -> Result<Mat<T>> {
        if self.shape() != rhs.shape() {
            return Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(rhs.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Broadcast-add a 1xN row vector to every row.
    pub fn add_row_broadcast(&self, v: &Mat<T>) -> Result<Mat<T>> {
        self.row_broadcast(v, |a, b| a + b, "add_row_broadcast")
    }

    /// Broadcast-multiply a 1xN row vector into every row.
    pub fn mul_row_broadcast(&self, v: &Mat<T>) -> Result<Mat<T>> {
        self.row_broadcast(v, |a, b| a * b, "mul_row_broadcast")
    }

    fn row_broadcast(&self, v: &Mat<T>, f: impl Fn(T, T) -> T, what: &str) -> Result<Mat<T>> {
        if v.rows != 1 || v.cols != self.cols {
            return Err(Error::Shape(format!(
                "{what}: vector {}x{} does not broadcast over {}x{}",
                v.rows, v.cols, self.rows, self.cols
            )));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[r * self.cols + c] = f(out.data[r * self.cols + c], v.data[c]);
            }
        }
        Ok(out)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Mx1 vector of row sums.
    pub fn sum_rows(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.rows, 1);
        for r in 0..self.rows {
            out.data[r] = self.row_slice(r).iter().copied().sum();
        }
        out
    }
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
/// `a` is NxN, `b` length N. Used by the exact policy-evaluation oracles.
pub fn solve_linear<T: Scalar>(a: &Mat<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::Shape(format!(
            "solve_linear: a is {}x{}, b has length {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let mut aug: Vec<T> = Vec::with_capacity(n * (n + 1));
    for r in 0..n {
        aug.extend_from_slice(a.row_slice(r));
        aug.push(b[r]);
    }
    let w = n + 1;
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if aug[r * w + col].abs() > aug[pivot * w + col].abs() {
                pivot = r;
            }
        }
        if aug[pivot * w + col].abs() < T::from_f64(1e-14).unwrap() {
            return Err(Error::Numeric("solve_linear: singular matrix".into()));
        }
        if pivot != col {
            for c in 0..w {
                aug.swap(col * w + c, pivot * w + c);
            }
        }
        let d = aug[col * w + col];
        for r in col + 1..n {
            let f = aug[r * w + col] / d;
            if f == T::zero() {
                continue;
            }
            for c in col..w {
                let v = aug[col * w + c];
                aug[r * w + c] = aug[r * w + c] - f * v;
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut acc = aug[r * w + n];
        for c in r + 1..n {
            acc = acc - aug[r * w + c] * x[c];
        }
        x[r] = acc / aug[r * w + r];
    }
    Ok(x)
}
