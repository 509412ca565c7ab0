//! Column-major dense storage.

use std::ops::{Index, IndexMut, Range};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A dense `rows x cols` matrix stored column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::eye(n, n)
    }

    /// The first `cols` columns of the `rows x rows` identity.
    pub fn eye(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from row-major nested slices; convenient for literals in tests.
    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Self::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }

    /// Seeded standard Gaussian entries (ChaCha8 stream, column-major fill).
    pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                T::from_f64_lossy(x)
            })
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Position of the first non-finite entry, if any.
    pub fn find_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|k| (k % self.rows.max(1), k / self.rows.max(1)))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.find_non_finite() {
            Some((row, col)) => Err(Error::NonFinite { row, col }),
            None => Ok(()),
        }
    }

    /// Copy of the row block `range`.
    pub fn row_block(&self, range: Range<usize>) -> Self {
        let r = range.len();
        let mut out = Self::zeros(r, self.cols);
        for j in 0..self.cols {
            out.col_mut(j)
                .copy_from_slice(&self.col(j)[range.start..range.end]);
        }
        out
    }

    /// Writes `block` into rows starting at `row0`.
    pub fn set_row_block(&mut self, row0: usize, block: &Self) {
        assert_eq!(block.cols, self.cols);
        assert!(row0 + block.rows <= self.rows);
        for j in 0..self.cols {
            self.col_mut(j)[row0..row0 + block.rows].copy_from_slice(block.col(j));
        }
    }

    /// Top-left `rows x cols` submatrix.
    pub fn leading(&self, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(i, j)])
    }

    /// Stacks `self` on top of `below`.
    pub fn vstack(&self, below: &Self) -> Result<Self> {
        if self.cols != below.cols {
            return Err(Error::Dimension(format!(
                "cannot stack {} columns on {} columns",
                self.cols, below.cols
            )));
        }
        let rows = self.rows + below.rows;
        Ok(Self::from_fn(rows, self.cols, |i, j| {
            if i < self.rows {
                self[(i, j)]
            } else {
                below[(i - self.rows, j)]
            }
        }))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (k, &b) in rhs.col(j).iter().enumerate() {
                if b == T::zero() {
                    continue;
                }
                for (d, &a) in dst.iter_mut().zip(self.col(k)) {
                    *d = *d + a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * rhs` without materializing the transpose.
    pub fn tr_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::Dimension(format!(
                "({}x{})^T times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Self::from_fn(self.cols, rhs.cols, |i, j| dot(self.col(i), rhs.col(j))))
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::Dimension("shape mismatch in subtraction".into()));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn frobenius_norm(&self) -> T {
        // Scaled accumulation keeps huge and tiny entries from over/underflowing.
        let scale = self
            .data
            .iter()
            .fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m });
        if scale == T::zero() {
            return T::zero();
        }
        let ssq: T = self.data.iter().map(|&v| (v / scale) * (v / scale)).sum();
        scale * ssq.sqrt()
    }

    pub fn is_upper_triangular(&self) -> bool {
        (0..self.cols).all(|j| (j + 1..self.rows).all(|i| self[(i, j)] == T::zero()))
    }

    /// Upper triangle (diagonal included) packed column by column.
    pub fn pack_upper(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.cols * (self.cols + 1) / 2);
        for j in 0..self.cols {
            out.extend_from_slice(&self.col(j)[..=j.min(self.rows - 1)]);
        }
        out
    }

    pub fn cast<U: Real>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute distance when `b` is zero.
pub fn relative_distance<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<T> {
    let diff = a.sub(b)?.frobenius_norm();
    let base = b.frobenius_norm();
    Ok(if base == T::zero() { diff } else { diff / base })
}
