//! Classical Householder QR: reflector construction, the unblocked column
//! sweep and the blocked variant whose trailing update runs through `gemm`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dense::{dot_slices, gemm, gemv, nrm2, Matrix, VectorView};
use crate::error::{Error, Result};

/// Orthogonal reflector `P = I - 2 v v^T` built from a column `x`, together
/// with the scalars both update paths need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholderReflector {
    /// Unit vector defining the reflection.
    pub v: Vec<f64>,
    /// Leading value produced by the reflection, `-sign(x1) * ||x||`.
    pub alpha: f64,
    /// Half-norm scalar `sqrt((alpha^2 - x1 * alpha) / 2)`.
    pub r: f64,
    /// `x1 - alpha`.
    pub beta_scalar: f64,
    /// Signed norm used by the fused path; equal to `alpha`.
    pub norm: f64,
    /// Set for a zero column: the reflector acts as the identity.
    pub degenerate: bool,
}

impl HouseholderReflector {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    fn identity(len: usize) -> Self {
        let mut v = vec![0.0; len];
        v[0] = 1.0;
        Self {
            v,
            alpha: 0.0,
            r: 0.0,
            beta_scalar: 0.0,
            norm: 0.0,
            degenerate: true,
        }
    }

    /// Explicit `P = I - 2 v v^T` (identity for a degenerate reflector).
    pub fn explicit(&self) -> Matrix {
        let n = self.len();
        if self.degenerate {
            return Matrix::identity(n);
        }
        Matrix::from_fn(n, n, |i, j| {
            let outer = self.v[i] * self.v[j];
            let delta = if i == j { 1.0 } else { 0.0 };
            delta - (outer + outer)
        })
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Builds the reflector that maps `x` onto `(alpha, 0, ..., 0)`.
pub fn make_reflector(x: &VectorView) -> Result<HouseholderReflector> {
    if x.is_empty() {
        return Err(Error::dim("reflector needs a nonempty column"));
    }
    let norm = nrm2(x);
    if norm == 0.0 {
        return Ok(HouseholderReflector::identity(x.len()));
    }
    let x1 = x.get(0);
    let alpha = -sign(x1) * norm;
    let mut r = (0.5 * (alpha * alpha - x1 * alpha)).sqrt();
    if !r.is_finite() || r == 0.0 {
        // alpha and x1 - alpha share a sign, so the product form cannot cancel.
        r = (0.5 * alpha.abs()).sqrt() * (alpha - x1).abs().sqrt();
    }
    let two_r = r + r;
    let beta_scalar = x1 - alpha;
    let mut v = Vec::with_capacity(x.len());
    v.push(beta_scalar / two_r);
    v.extend((1..x.len()).map(|k| x.get(k) / two_r));
    Ok(HouseholderReflector {
        v,
        alpha,
        r,
        beta_scalar,
        norm: alpha,
        degenerate: false,
    })
}

/// Applies `P` to rows `row0..` and columns `cols` of `a` in two stages:
/// `w = v^T A_block`, then `A_block -= 2 v w^T`.
pub fn apply_reflector_classic(
    refl: &HouseholderReflector,
    a: &mut Matrix,
    row0: usize,
    cols: Range<usize>,
) -> Result<()> {
    let m = a.rows();
    if row0 + refl.len() != m {
        return Err(Error::dim(format!(
            "reflector of length {} against rows {row0}..{m}",
            refl.len()
        )));
    }
    if cols.end > a.cols() {
        return Err(Error::dim(format!(
            "column range {cols:?} exceeds {} columns",
            a.cols()
        )));
    }
    if refl.degenerate || cols.is_empty() {
        return Ok(());
    }
    let v = &refl.v;
    let w: Vec<f64> = cols
        .clone()
        .map(|j| dot_slices(v, &a.col(j)[row0..]))
        .collect();
    for (j, wj) in cols.zip(w) {
        let col = &mut a.col_mut(j)[row0..];
        for (aij, &vi) in col.iter_mut().zip(v) {
            let t = vi * wj;
            *aij -= t + t;
        }
    }
    Ok(())
}

/// Packed QR factorization: `R` on and above the diagonal, the reflector
/// vectors below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrFactorization {
    pub packed: Matrix,
    /// Leading component `v1` of each reflector; zero marks an identity
    /// reflector (zero column).
    pub taus: Vec<f64>,
    pub m: usize,
    pub n: usize,
}

impl QrFactorization {
    /// Unit vector of reflector `k` (length `m - k`).
    pub fn reflector_vector(&self, k: usize) -> Option<Vec<f64>> {
        let v1 = self.taus[k];
        if v1 == 0.0 {
            return None;
        }
        let mut v = Vec::with_capacity(self.m - k);
        v.push(v1);
        v.extend_from_slice(&self.packed.col(k)[k + 1..]);
        Some(v)
    }

    /// `m x n` upper-trapezoidal factor with exact zeros below the diagonal.
    pub fn r(&self) -> Matrix {
        Matrix::from_fn(self.m, self.n, |i, j| {
            if i <= j {
                self.packed.get(i, j)
            } else {
                0.0
            }
        })
    }

    /// Explicit `m x m` orthogonal factor `P_1 P_2 ... P_n`.
    pub fn form_q(&self) -> Matrix {
        let m = self.m;
        let mut q = Matrix::identity(m);
        for k in (0..self.n).rev() {
            let Some(v) = self.reflector_vector(k) else {
                continue;
            };
            for j in 0..m {
                let col = &mut q.col_mut(j)[k..];
                let w = dot_slices(&v, col);
                for (qi, &vi) in col.iter_mut().zip(&v) {
                    let t = vi * w;
                    *qi -= t + t;
                }
            }
        }
        q
    }

    /// `Q R`, useful for residual checks.
    pub fn reconstruct(&self) -> Matrix {
        gemm(&self.form_q(), &self.r(), None).expect("conforming factors")
    }
}

pub fn form_q(f: &QrFactorization) -> Matrix {
    f.form_q()
}

pub(crate) fn check_tall(a: &Matrix) -> Result<()> {
    if a.rows() < a.cols() {
        return Err(Error::WideMatrix {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    Ok(())
}

/// Strategy for applying one reflector to the remaining panel columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PanelKernel {
    Classic,
    Fused,
}

/// Factors columns `cols` of `a` in place, storing `alpha` on the diagonal and
/// `v` below it. Reflectors touch only columns inside `cols`.
pub(crate) fn factor_columns(
    a: &mut Matrix,
    cols: Range<usize>,
    kernel: PanelKernel,
    taus: &mut [f64],
) -> Result<()> {
    let m = a.rows();
    let end = cols.end;
    for k in cols {
        let refl = make_reflector(&a.col_view(k, k))?;
        match kernel {
            PanelKernel::Classic => {
                apply_reflector_classic(&refl, a, k, k + 1..end)?;
                store_reflector(a, k, &refl);
            }
            PanelKernel::Fused => {
                crate::modified::fused_update_range(a, &refl, k, k + 1..end)?;
            }
        }
        taus[k] = if refl.degenerate { 0.0 } else { refl.v[0] };
        debug_assert!(k < m);
    }
    Ok(())
}

pub(crate) fn store_reflector(a: &mut Matrix, k: usize, refl: &HouseholderReflector) {
    let col = a.col_mut(k);
    col[k] = refl.alpha;
    if refl.degenerate {
        for x in &mut col[k + 1..] {
            *x = 0.0;
        }
    } else {
        col[k + 1..].copy_from_slice(&refl.v[1..]);
    }
}

/// Unblocked Householder QR with the two-stage classical update.
pub fn geqr2(a: &Matrix) -> Result<QrFactorization> {
    check_tall(a)?;
    let (m, n) = a.shape();
    let mut packed = a.clone();
    let mut taus = vec![0.0; n];
    factor_columns(&mut packed, 0..n, PanelKernel::Classic, &mut taus)?;
    Ok(QrFactorization { packed, taus, m, n })
}

/// Blocked Householder QR: panels are factored column by column, then the
/// panel's reflectors are aggregated into `Q_p = I - W V^T` and applied to the
/// trailing matrix as `Z = W^T A`, `A -= V Z` (two `gemm` calls).
pub fn geqrf(a: &Matrix, block_size: usize) -> Result<QrFactorization> {
    blocked(a, block_size, PanelKernel::Classic)
}

pub(crate) fn blocked(a: &Matrix, block_size: usize, kernel: PanelKernel) -> Result<QrFactorization> {
    check_tall(a)?;
    let (m, n) = a.shape();
    if block_size == 0 || block_size > n {
        return Err(Error::BlockSize {
            block_size,
            cols: n,
        });
    }
    let mut packed = a.clone();
    let mut taus = vec![0.0; n];
    let mut p = 0;
    while p < n {
        let jb = block_size.min(n - p);
        factor_columns(&mut packed, p..p + jb, kernel, &mut taus)?;
        if p + jb < n {
            let f = QrFactorization {
                packed: packed.clone(),
                taus: taus.clone(),
                m,
                n,
            };
            let (v, w) = aggregate_panel(&f, p, jb);
            update_trailing(&mut packed, p, p + jb, &v, &w)?;
        }
        p += jb;
    }
    Ok(QrFactorization { packed, taus, m, n })
}

/// Returns `(V, W)` for panel columns `p..p+jb`, both `(m-p) x jb`, such that
/// `P_p ... P_{p+jb-1} = I - W V^T`.
fn aggregate_panel(f: &QrFactorization, p: usize, jb: usize) -> (Matrix, Matrix) {
    let len = f.m - p;
    let mut v = Matrix::zeros(len, jb);
    for k in 0..jb {
        if let Some(vk) = f.reflector_vector(p + k) {
            v.col_mut(k)[k..].copy_from_slice(&vk);
        }
    }
    let mut w = Matrix::zeros(len, jb);
    for k in 0..jb {
        let vk = v.col(k).to_vec();
        let mut col: Vec<f64> = if k == 0 {
            vk.clone()
        } else {
            let vprev = v.submatrix(0, 0, len, k);
            let wprev = w.submatrix(0, 0, len, k);
            let g = gemv(&vprev, &VectorView::from_slice(&vk), true).expect("conforming");
            let y = gemv(&wprev, &VectorView::from_slice(&g), false).expect("conforming");
            vk.iter().zip(&y).map(|(a, b)| a - b).collect()
        };
        for x in &mut col {
            *x += *x;
        }
        w.col_mut(k).copy_from_slice(&col);
    }
    (v, w)
}

fn update_trailing(a: &mut Matrix, p: usize, c0: usize, v: &Matrix, w: &Matrix) -> Result<()> {
    let (m, n) = a.shape();
    let trail = a.submatrix(p, c0, m - p, n - c0);
    let z = gemm(&w.transpose(), &trail, None)?;
    let neg_v = Matrix::from_fn(v.rows(), v.cols(), |i, j| -v.get(i, j));
    let updated = gemm(&neg_v, &z, Some(&trail))?;
    for j in 0..n - c0 {
        a.col_mut(c0 + j)[p..].copy_from_slice(updated.col(j));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = f64::EPSILON;

    fn view(x: &[f64]) -> VectorView<'_> {
        VectorView::from_slice(x)
    }

    #[test]
    fn reflector_of_negative_unit_column() {
        let refl = make_reflector(&view(&[-1.0, 0.0, 0.0])).unwrap();
        assert_eq!(refl.alpha, 1.0);
        assert_eq!(refl.r, 1.0);
        assert_eq!(refl.v, vec![-1.0, 0.0, 0.0]);
        let mut a = Matrix::from_col_major(3, 1, vec![-1.0, 0.0, 0.0]).unwrap();
        apply_reflector_classic(&refl, &mut a, 0, 0..1).unwrap();
        assert_eq!(a.col(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn reflector_of_three_four() {
        let refl = make_reflector(&view(&[3.0, 4.0])).unwrap();
        assert_eq!(refl.alpha, -5.0);
        assert!((refl.r - 20f64.sqrt()).abs() <= 4.0 * EPS * refl.r);
        let d = 2.0 * 20f64.sqrt();
        assert!((refl.v[0] - 8.0 / d).abs() <= 4.0 * EPS);
        assert!((refl.v[1] - 4.0 / d).abs() <= 4.0 * EPS);
        assert!((refl.v[0] - 0.8944).abs() < 1e-4 && (refl.v[1] - 0.4472).abs() < 1e-4);
        let norm: f64 = refl.v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 16.0 * 2.0 * EPS);
        assert_eq!(refl.beta_scalar, 8.0);
        assert_eq!(refl.norm, refl.alpha);
    }

    #[test]
    fn zero_column_gives_identity_reflector() {
        let refl = make_reflector(&view(&[0.0, 0.0, 0.0])).unwrap();
        assert!(refl.degenerate);
        assert_eq!(refl.alpha, 0.0);
        let mut a = Matrix::from_rows(&[&[1.0], &[2.0], &[3.0]]).unwrap();
        let before = a.clone();
        apply_reflector_classic(&refl, &mut a, 0, 0..1).unwrap();
        assert_eq!(a, before);
    }

    #[test]
    fn sign_of_zero_leading_entry_is_positive() {
        let refl = make_reflector(&view(&[0.0, 2.0])).unwrap();
        assert_eq!(refl.alpha, -2.0);
    }

    #[test]
    fn coordinate_reflector_negates_first_row() {
        let refl = HouseholderReflector {
            v: vec![1.0, 0.0, 0.0],
            alpha: -1.0,
            r: 1.0,
            beta_scalar: 2.0,
            norm: -1.0,
            degenerate: false,
        };
        let mut a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap();
        apply_reflector_classic(&refl, &mut a, 0, 0..2).unwrap();
        assert_eq!(a, Matrix::from_rows(&[&[-1.0, -2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap());
    }

    #[test]
    fn classic_application_matches_explicit_p() {
        let refl = make_reflector(&view(&[-1.0, 0.0, 0.0])).unwrap();
        let block = Matrix::from_rows(&[&[0.5, -2.0], &[1.25, 3.0], &[-0.75, 0.125]]).unwrap();
        let expected = gemm(&refl.explicit(), &block, None).unwrap();
        let mut got = block.clone();
        apply_reflector_classic(&refl, &mut got, 0, 0..2).unwrap();
        let tol = 8.0 * EPS * block.frobenius_norm();
        for (a, b) in got.as_slice().iter().zip(expected.as_slice()) {
            assert!((a - b).abs() <= tol);
        }

        let refl = make_reflector(&view(&[0.3, -1.7, 2.2])).unwrap();
        let expected = gemm(&refl.explicit(), &block, None).unwrap();
        let mut got = block.clone();
        apply_reflector_classic(&refl, &mut got, 0, 0..2).unwrap();
        for (a, b) in got.as_slice().iter().zip(expected.as_slice()) {
            assert!((a - b).abs() <= tol);
        }
    }

    #[test]
    fn reflector_length_must_match_block() {
        let refl = make_reflector(&view(&[1.0, 1.0])).unwrap();
        let mut a = Matrix::zeros(3, 1);
        assert!(apply_reflector_classic(&refl, &mut a, 0, 0..1).is_err());
    }

    #[test]
    fn geqr2_identity_and_diagonal() {
        let f = geqr2(&Matrix::identity(4)).unwrap();
        assert_eq!(f.r().as_slice().iter().map(|x| x.abs()).collect::<Vec<_>>(), Matrix::identity(4).into_vec());
        let q = f.form_q();
        for (a, b) in q.as_slice().iter().zip(Matrix::identity(4).as_slice()) {
            assert!((a.abs() - b).abs() <= 4.0 * EPS);
        }

        let d = Matrix::from_diag(&[2.0, 3.0]);
        let f = geqr2(&d).unwrap();
        let r = f.r();
        assert_eq!(r.get(0, 0).abs(), 2.0);
        assert_eq!(r.get(1, 1).abs(), 3.0);
        assert_eq!(r.get(1, 0), 0.0);
        let back = f.reconstruct();
        assert!(back.sub(&d).unwrap().max_abs() <= 4.0 * EPS * 3.0);
    }

    #[test]
    fn geqr2_rank_deficient() {
        let a = Matrix::from_fn(3, 3, |i, j| (i + 1 + 3 * j) as f64);
        let f = geqr2(&a).unwrap();
        let resid = f.reconstruct().sub(&a).unwrap().frobenius_norm() / a.frobenius_norm();
        assert!(resid <= 64.0 * 3.0 * EPS);
        assert!(f.r().get(2, 2).abs() <= 64.0 * EPS * a.frobenius_norm());
    }

    #[test]
    fn q_of_three_four_column() {
        let a = Matrix::from_rows(&[&[3.0], &[4.0]]).unwrap();
        let f = geqr2(&a).unwrap();
        let q = f.form_q();
        let r = f.r();
        assert!((r.get(0, 0) + 5.0).abs() <= 4.0 * EPS * 5.0);
        assert!((q.get(0, 0) + 0.6).abs() <= 4.0 * EPS);
        assert!((q.get(1, 0) + 0.8).abs() <= 4.0 * EPS);
    }

    #[test]
    fn wide_matrix_rejected() {
        assert!(matches!(geqr2(&Matrix::zeros(2, 3)), Err(Error::WideMatrix { .. })));
        assert!(matches!(geqrf(&Matrix::zeros(2, 3), 1), Err(Error::WideMatrix { .. })));
    }

    #[test]
    fn block_size_validated() {
        let a = Matrix::identity(4);
        assert!(matches!(geqrf(&a, 0), Err(Error::BlockSize { .. })));
        assert!(matches!(geqrf(&a, 5), Err(Error::BlockSize { .. })));
    }

    #[test]
    fn blocked_matches_unblocked_for_extreme_blocks() {
        let a = Matrix::from_fn(7, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.1 * j as f64);
        let r2 = geqr2(&a).unwrap().r();
        let tol = 128.0 * 5.0 * EPS * a.frobenius_norm();
        for bs in [1, 2, 3, 5] {
            let rf = geqrf(&a, bs).unwrap().r();
            assert!(rf.sub(&r2).unwrap().max_abs() <= tol, "block size {bs}");
        }
    }
}
