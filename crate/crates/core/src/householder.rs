//! Householder QR of a tall block.
//!
//! Reflectors follow the LAPACK convention `H = I - tau v v^T` with `v[0] = 1`
//! stored implicitly. Panels of `block` columns are factored unblocked, then
//! the trailing columns are updated with the compact form `I - V T V^T`.

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};
use crate::scalar::Real;

/// Panel width used by [`householder_qr`].
pub const DEFAULT_BLOCK: usize = 32;

/// Flops for a Householder QR of an `m x n` block, `2mn^2 - 2/3 n^3`.
pub fn qr_flops(m: usize, n: usize) -> f64 {
    let (m, n) = (m as f64, n as f64);
    2.0 * m * n * n - 2.0 / 3.0 * n * n * n
}

/// Result of [`householder_qr`]: `A = Q R` with `Q = H_0 H_1 ... H_{n-1} D`,
/// where `D = diag(signs)` records flips made by sign normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct HouseholderFactor<T> {
    /// `m x n`; the strict lower trapezoid holds the reflector tails.
    pub(crate) reflectors: DenseMatrix<T>,
    pub(crate) tau: Vec<T>,
    pub(crate) r: DenseMatrix<T>,
    pub(crate) signs: Vec<T>,
}

impl<T: Real> HouseholderFactor<T> {
    pub fn rows(&self) -> usize {
        self.reflectors.rows()
    }

    pub fn cols(&self) -> usize {
        self.reflectors.cols()
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

    /// Tail of reflector `j` (entries below its implicit leading one).
    pub fn reflector_tail(&self, j: usize) -> &[T] {
        &self.reflectors.col(j)[j + 1..]
    }

    /// Flips rows of R (and the matching columns of Q) so that diag(R) >= 0.
    pub fn sign_normalize(mut self) -> Self {
        normalize_rows(&mut self.r, &mut self.signs);
        self
    }

    /// `Q^T C`.
    pub fn apply_q_transpose(&self, c: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.check_rows(c)?;
        let mut out = c.clone();
        for k in 0..out.cols() {
            let col = out.col_mut(k);
            for j in 0..self.cols() {
                reflect(self.tau[j], self.reflector_tail(j), &mut col[j..]);
            }
            for (x, &s) in col.iter_mut().zip(&self.signs) {
                *x = *x * s;
            }
        }
        Ok(out)
    }

    /// `Q C`.
    pub fn apply_q(&self, c: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.check_rows(c)?;
        let mut out = c.clone();
        for k in 0..out.cols() {
            let col = out.col_mut(k);
            for (x, &s) in col.iter_mut().zip(&self.signs) {
                *x = *x * s;
            }
            for j in (0..self.cols()).rev() {
                reflect(self.tau[j], self.reflector_tail(j), &mut col[j..]);
            }
        }
        Ok(out)
    }

    /// The thin `m x n` orthonormal factor.
    pub fn thin_q(&self) -> DenseMatrix<T> {
        self.apply_q(&DenseMatrix::eye(self.rows(), self.cols()))
            .expect("shape matches by construction")
    }

    /// Negates one reflector scale. Breaks orthogonality of Q; used only to
    /// check that verification catches a corrupted factor.
    #[doc(hidden)]
    pub fn inject_tau_sign_fault(&mut self, j: usize) {
        self.tau[j] = -self.tau[j];
    }

    fn check_rows(&self, c: &DenseMatrix<T>) -> Result<()> {
        if c.rows() != self.rows() {
            return Err(Error::Dimension(format!(
                "factor has {} rows, operand has {}",
                self.rows(),
                c.rows()
            )));
        }
        Ok(())
    }
}

/// Householder QR with the default panel width.
pub fn householder_qr<T: Real>(a: &DenseMatrix<T>) -> Result<HouseholderFactor<T>> {
    householder_qr_blocked(a, DEFAULT_BLOCK)
}

/// Householder QR processing `block` columns per panel. `block = 1` is the
/// plain column-by-column algorithm.
pub fn householder_qr_blocked<T: Real>(
    a: &DenseMatrix<T>,
    block: usize,
) -> Result<HouseholderFactor<T>> {
    let (m, n) = (a.rows(), a.cols());
    if n == 0 {
        return Err(Error::Dimension("matrix has no columns".into()));
    }
    if m < n {
        return Err(Error::NotTall { rows: m, cols: n });
    }
    a.check_finite()?;
    let block = block.max(1);

    let mut work = a.clone();
    let mut tau = vec![T::zero(); n];
    let mut k = 0;
    while k < n {
        let kb = block.min(n - k);
        for (j, t) in tau.iter_mut().enumerate().skip(k).take(kb) {
            *t = make_reflector(work.col_mut(j), j);
            for c in j + 1..k + kb {
                apply_left(&mut work, j, *t, c);
            }
        }
        if k + kb < n {
            let t = triangular_factor(&work, &tau, k, kb);
            apply_block_transpose(&mut work, &t, k, kb);
        }
        k += kb;
    }

    let r = DenseMatrix::from_fn(n, n, |i, j| if i <= j { work[(i, j)] } else { T::zero() });
    Ok(HouseholderFactor {
        reflectors: work,
        tau,
        r,
        signs: vec![T::one(); n],
    })
}

/// Turns `col[j..]` into `beta e_1` and stores the reflector tail in place.
/// Returns tau; zero when the tail is already zero.
fn make_reflector<T: Real>(col: &mut [T], j: usize) -> T {
    let alpha = col[j];
    let xnorm = norm2(&col[j + 1..]);
    if xnorm == T::zero() {
        return T::zero();
    }
    let beta = -alpha.hypot(xnorm).copysign(alpha);
    let tau = (beta - alpha) / beta;
    let scale = T::one() / (alpha - beta);
    for x in &mut col[j + 1..] {
        *x = *x * scale;
    }
    col[j] = beta;
    tau
}

/// Applies `H_j` to column `c` of the working matrix.
fn apply_left<T: Real>(work: &mut DenseMatrix<T>, j: usize, tau: T, c: usize) {
    if tau == T::zero() {
        return;
    }
    let m = work.rows();
    let tail: Vec<T> = work.col(j)[j + 1..m].to_vec();
    reflect(tau, &tail, &mut work.col_mut(c)[j..]);
}

/// `x <- (I - tau v v^T) x` with `v = [1; tail]`.
pub(crate) fn reflect<T: Real>(tau: T, tail: &[T], x: &mut [T]) {
    if tau == T::zero() {
        return;
    }
    let s = tau * (x[0] + dot(tail, &x[1..]));
    x[0] = x[0] - s;
    for (xi, &vi) in x[1..].iter_mut().zip(tail) {
        *xi = *xi - s * vi;
    }
}

pub(crate) fn norm2<T: Real>(x: &[T]) -> T {
    let scale = x
        .iter()
        .fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m });
    if scale == T::zero() {
        return T::zero();
    }
    let ssq: T = x.iter().map(|&v| (v / scale) * (v / scale)).sum();
    scale * ssq.sqrt()
}

/// Row `i` of the panel reflector matrix `V` (panel starting at column `k`),
/// including the implicit unit diagonal and zeros above it.
fn panel_v<T: Real>(work: &DenseMatrix<T>, k: usize, col: usize, row: usize) -> T {
    let j = k + col;
    match row.cmp(&j) {
        std::cmp::Ordering::Less => T::zero(),
        std::cmp::Ordering::Equal => T::one(),
        std::cmp::Ordering::Greater => work[(row, j)],
    }
}

/// Upper-triangular `T` with `H_k ... H_{k+kb-1} = I - V T V^T`.
fn triangular_factor<T: Real>(work: &DenseMatrix<T>, tau: &[T], k: usize, kb: usize) -> DenseMatrix<T> {
    let m = work.rows();
    let mut t = DenseMatrix::zeros(kb, kb);
    for i in 0..kb {
        t[(i, i)] = tau[k + i];
        if tau[k + i] == T::zero() {
            continue;
        }
        // y = V[:, 0..i]^T v_i over rows where v_i is nonzero.
        let y: Vec<T> = (0..i)
            .map(|p| {
                (k + i..m).fold(T::zero(), |acc, row| {
                    acc + panel_v(work, k, p, row) * panel_v(work, k, i, row)
                })
            })
            .collect();
        for r in 0..i {
            let s = (r..i).fold(T::zero(), |acc, c| acc + t[(r, c)] * y[c]);
            t[(r, i)] = -tau[k + i] * s;
        }
    }
    t
}

/// Trailing update `C <- (I - V T^T V^T) C` for columns right of the panel.
fn apply_block_transpose<T: Real>(work: &mut DenseMatrix<T>, t: &DenseMatrix<T>, k: usize, kb: usize) {
    let (m, n) = (work.rows(), work.cols());
    for c in k + kb..n {
        // w = V^T C[:, c]
        let mut w: Vec<T> = (0..kb)
            .map(|p| {
                (k + p..m).fold(T::zero(), |acc, row| {
                    acc + panel_v(work, k, p, row) * work[(row, c)]
                })
            })
            .collect();
        // w <- T^T w
        for p in (0..kb).rev() {
            w[p] = (0..=p).fold(T::zero(), |acc, q| acc + t[(q, p)] * w[q]);
        }
        for row in k..m {
            let upto = (row - k + 1).min(kb);
            let s = (0..upto).fold(T::zero(), |acc, p| acc + panel_v(work, k, p, row) * w[p]);
            work[(row, c)] = work[(row, c)] - s;
        }
    }
}

/// Negates rows of `r` whose diagonal is negative and records the flip.
pub(crate) fn normalize_rows<T: Real>(r: &mut DenseMatrix<T>, signs: &mut [T]) {
    for i in 0..r.cols() {
        if r[(i, i)] < T::zero() {
            for j in i..r.cols() {
                r[(i, j)] = -r[(i, j)];
            }
            signs[i] = -signs[i];
        }
    }
}
