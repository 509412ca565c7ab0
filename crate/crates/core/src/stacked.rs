//! QR of two stacked upper triangles, `[R1; R2] = Q R`.
//!
//! Reflector `j` touches row `j` of the top triangle and rows `0..=j` of the
//! bottom one, and the bottom block stays upper triangular throughout, so the
//! reflector tails fit in an `n x n` upper-triangular store. The zero blocks
//! of the `2n x n` stack are never formed.

use crate::error::{Error, Result};
use crate::householder::{normalize_rows, norm2};
use crate::matrix::{dot, DenseMatrix};
use crate::scalar::Real;

/// Flops of one merge, `2/3 n^3`.
pub fn stacked_qr_flops(n: usize) -> f64 {
    let n = n as f64;
    2.0 / 3.0 * n * n * n
}

#[derive(Clone, Debug, PartialEq)]
pub struct StackedQrFactor<T> {
    /// Column `j` rows `0..=j` hold the bottom part of reflector `j`.
    pub(crate) tails: DenseMatrix<T>,
    pub(crate) tau: Vec<T>,
    pub(crate) r: DenseMatrix<T>,
    pub(crate) signs: Vec<T>,
}

impl<T: Real> StackedQrFactor<T> {
    pub fn n(&self) -> usize {
        self.r.cols()
    }

    pub fn r(&self) -> &DenseMatrix<T> {
        &self.r
    }

    pub fn into_r(self) -> DenseMatrix<T> {
        self.r
    }

    pub fn tau(&self) -> &[T] {
        &self.tau
    }

    pub fn signs(&self) -> &[T] {
        &self.signs
    }

    pub fn sign_normalize(mut self) -> Self {
        normalize_rows(&mut self.r, &mut self.signs);
        self
    }

    /// `Q^T [top; bottom]`, each half `n x k`.
    pub fn apply_q_transpose(
        &self,
        top: &DenseMatrix<T>,
        bottom: &DenseMatrix<T>,
    ) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
        let (mut top, mut bottom) = self.checked_halves(top, bottom)?;
        for k in 0..top.cols() {
            for j in 0..self.n() {
                self.reflect(j, &mut top, &mut bottom, k);
            }
            for (x, &s) in top.col_mut(k).iter_mut().zip(&self.signs) {
                *x = *x * s;
            }
        }
        Ok((top, bottom))
    }

    /// `Q [top; bottom]`, each half `n x k`.
    pub fn apply_q(
        &self,
        top: &DenseMatrix<T>,
        bottom: &DenseMatrix<T>,
    ) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
        let (mut top, mut bottom) = self.checked_halves(top, bottom)?;
        for k in 0..top.cols() {
            for (x, &s) in top.col_mut(k).iter_mut().zip(&self.signs) {
                *x = *x * s;
            }
            for j in (0..self.n()).rev() {
                self.reflect(j, &mut top, &mut bottom, k);
            }
        }
        Ok((top, bottom))
    }

    fn reflect(&self, j: usize, top: &mut DenseMatrix<T>, bottom: &mut DenseMatrix<T>, k: usize) {
        let tau = self.tau[j];
        if tau == T::zero() {
            return;
        }
        let v = &self.tails.col(j)[..=j];
        let bcol = bottom.col_mut(k);
        let s = tau * (top[(j, k)] + dot(v, &bcol[..=j]));
        for (b, &vi) in bcol[..=j].iter_mut().zip(v) {
            *b = *b - s * vi;
        }
        top[(j, k)] = top[(j, k)] - s;
    }

    fn checked_halves(
        &self,
        top: &DenseMatrix<T>,
        bottom: &DenseMatrix<T>,
    ) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
        let n = self.n();
        if top.rows() != n || bottom.rows() != n || top.cols() != bottom.cols() {
            return Err(Error::Dimension(format!(
                "stacked factor of order {n} applied to {}x{} over {}x{}",
                top.rows(),
                top.cols(),
                bottom.rows(),
                bottom.cols()
            )));
        }
        Ok((top.clone(), bottom.clone()))
    }
}

/// Factors `[r1; r2]` for two `n x n` upper-triangular inputs.
pub fn stacked_qr<T: Real>(r1: &DenseMatrix<T>, r2: &DenseMatrix<T>) -> Result<StackedQrFactor<T>> {
    let n = r1.cols();
    if r1.rows() != n || r2.rows() != n || r2.cols() != n {
        return Err(Error::Dimension(format!(
            "stacked QR needs two square triangles of equal order, got {}x{} and {}x{}",
            r1.rows(),
            r1.cols(),
            r2.rows(),
            r2.cols()
        )));
    }
    if n == 0 {
        return Err(Error::Dimension("empty triangles".into()));
    }
    r1.check_finite()?;
    r2.check_finite()?;
    if !r1.is_upper_triangular() || !r2.is_upper_triangular() {
        return Err(Error::Dimension("inputs must be upper triangular".into()));
    }

    let mut top = r1.clone();
    let mut tails = r2.clone();
    let mut tau = vec![T::zero(); n];
    for j in 0..n {
        let alpha = top[(j, j)];
        let xnorm = norm2(&tails.col(j)[..=j]);
        if xnorm == T::zero() {
            continue;
        }
        let beta = -alpha.hypot(xnorm).copysign(alpha);
        let t = (beta - alpha) / beta;
        let scale = T::one() / (alpha - beta);
        for x in &mut tails.col_mut(j)[..=j] {
            *x = *x * scale;
        }
        top[(j, j)] = beta;
        tau[j] = t;

        for c in j + 1..n {
            let (vcol, ccol) = two_cols(&mut tails, j, c);
            let v = &vcol[..=j];
            let s = t * (top[(j, c)] + dot(v, &ccol[..=j]));
            top[(j, c)] = top[(j, c)] - s;
            for (b, &vi) in ccol[..=j].iter_mut().zip(v) {
                *b = *b - s * vi;
            }
        }
    }

    Ok(StackedQrFactor {
        tails,
        tau,
        r: top,
        signs: vec![T::one(); n],
    })
}

fn two_cols<T: Real>(m: &mut DenseMatrix<T>, a: usize, b: usize) -> (Vec<T>, &mut [T]) {
    debug_assert!(a < b);
    let va = m.col(a).to_vec();
    (va, m.col_mut(b))
}
