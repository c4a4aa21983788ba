use std::ops::{Index, IndexMut};

use num_traits::Float;

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    /// Builds a matrix from row-major entries, rejecting empty shapes and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid(format!("matrix shape {rows}x{cols} must be non-empty"));
        }
        if data.len() != rows * cols {
            return invalid(format!("expected {} entries for a {rows}x{cols} matrix, got {}", rows * cols, data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite entry at ({}, {})", pos / cols, pos % cols));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return invalid("ragged rows");
        }
        Self::new(r, c, rows.iter().flatten().copied().collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be non-empty");
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be non-empty");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Internal constructor for results of arithmetic on already-validated inputs.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[T]) {
        assert_eq!(values.len(), self.rows);
        for (i, &v) in values.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self[(i, j)]);
            }
        }
        Self::from_raw(self.cols, self.rows, out)
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return invalid(format!("cannot multiply {}x{} by {}x{}", self.rows, self.cols, rhs.rows, rhs.cols));
        }
        let mut out = vec![T::zero(); self.rows * rhs.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_raw(self.rows, rhs.cols, out))
    }

    fn zip_with(&self, rhs: &Self, op: &str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return invalid(format!("cannot {op} {}x{} and {}x{}", self.rows, self.cols, rhs.rows, rhs.cols));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_raw(self.rows, self.cols, data))
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "subtract", |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Multiplies column `j` by `weights[j]`, i.e. `self * diag(weights)`.
    pub fn scale_columns(&self, weights: &[T]) -> Result<Self> {
        if weights.len() != self.cols {
            return invalid(format!("{} column weights for a matrix with {} columns", weights.len(), self.cols));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for (v, &w) in out.row_mut(i).iter_mut().zip(weights) {
                *v *= w;
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Entrywise l1 norm.
    pub fn l1_norm(&self) -> T {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != T::zero()).count()
    }

    pub fn column_l2_norms(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (a, &v) in acc.iter_mut().zip(self.row(i)) {
                *a += v * v;
            }
        }
        acc.into_iter().map(Float::sqrt).collect()
    }

    /// Returns the matrix whose column `j` is column `perm[j]` of `self`.
    pub fn select_columns(&self, perm: &[usize]) -> Self {
        Self::from_fn(self.rows, perm.len(), |i, j| self[(i, perm[j])])
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self::from_raw(rows.len(), self.cols, data)
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|&v| U::lit(v.to_f64_lossy())).collect())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}
