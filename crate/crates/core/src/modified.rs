//! Modified Householder transform: `PA = A - 2 v (v^T A)` evaluated column by
//! column without forming `P`, one dot product followed by a single fused pass.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::classic::{
    blocked, check_tall, factor_columns, make_reflector, store_reflector, HouseholderReflector,
    PanelKernel, QrFactorization,
};
use crate::dense::{dot_slices, Matrix};
use crate::error::{Error, Result};

/// Scalars of the unnormalized-vector formulation for one trailing column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedUpdateScalars {
    /// Normalized accumulator `(beta * a1 + s) / (norm * beta)`.
    pub b: f64,
    /// Partial dot of the subdiagonal part of the column with the trailing column.
    pub s: f64,
    pub beta_scalar: f64,
    pub norm: f64,
    /// `-beta_scalar / norm`.
    pub tau: f64,
}

/// `a - 2 * v_i * partial_dot` with a fixed evaluation order:
/// `t = v_i * partial_dot; a - (t + t)`.
#[inline]
pub fn fused_macro_op(a: f64, v_i: f64, partial_dot: f64) -> f64 {
    let t = v_i * partial_dot;
    a - (t + t)
}

/// Applies `refl` (built from `A(k.., k)`) to every trailing column of `a` and
/// overwrites the pivot column with `alpha` and the reflector vector.
pub fn fused_update(a: &mut Matrix, refl: &HouseholderReflector, pivot_col: usize) -> Result<()> {
    let n = a.cols();
    if pivot_col >= n {
        return Err(Error::dim(format!("pivot column {pivot_col} out of {n}")));
    }
    fused_update_range(a, refl, pivot_col, pivot_col + 1..n)
}

pub(crate) fn fused_update_range(
    a: &mut Matrix,
    refl: &HouseholderReflector,
    k: usize,
    cols: Range<usize>,
) -> Result<()> {
    let m = a.rows();
    if k >= m || refl.len() != m - k {
        return Err(Error::dim(format!(
            "reflector of length {} does not match pivot {k} of a {m}-row matrix",
            refl.len()
        )));
    }
    if cols.end > a.cols() {
        return Err(Error::dim(format!("column range {cols:?} exceeds {}", a.cols())));
    }
    if !refl.degenerate {
        let x1 = a.get(k, k);
        if refl.beta_scalar != x1 - refl.alpha {
            return Err(Error::dim(format!(
                "reflector was not built from column {k}"
            )));
        }
        let v = &refl.v;
        for j in cols {
            let col = &mut a.col_mut(j)[k..];
            let d = dot_slices(v, col);
            for (aij, &vi) in col.iter_mut().zip(v) {
                *aij = fused_macro_op(*aij, vi, d);
            }
        }
    }
    store_reflector(a, k, refl);
    Ok(())
}

/// Unblocked QR with the fused update.
pub fn geqr2ht(a: &Matrix) -> Result<QrFactorization> {
    check_tall(a)?;
    let (m, n) = a.shape();
    let mut packed = a.clone();
    let mut taus = vec![0.0; n];
    factor_columns(&mut packed, 0..n, PanelKernel::Fused, &mut taus)?;
    Ok(QrFactorization { packed, taus, m, n })
}

/// Blocked QR: panels use the fused update, the trailing matrix the same
/// aggregated two-`gemm` scheme as [`crate::classic::geqrf`].
pub fn geqrfht(a: &Matrix, block_size: usize) -> Result<QrFactorization> {
    blocked(a, block_size, PanelKernel::Fused)
}

/// Direct transcription of the unnormalized-vector column update: the norm,
/// `beta = x1 - norm`, and per trailing column `B = a1 * beta`,
/// `S = x(2:L) . a(2:L)`, `B = (B + S) / (norm * beta)`, `a1 += beta * B`,
/// `aJ += xJ * B`. The pivot column ends up holding `norm` and `x(2:L) / beta`.
/// Kept as an independent cross-check of [`fused_update`].
pub fn literal_column_update(a: &mut Matrix, k: usize) -> Result<Vec<FusedUpdateScalars>> {
    let (m, n) = a.shape();
    if k >= n || k >= m {
        return Err(Error::dim(format!("pivot {k} outside {m}x{n}")));
    }
    let x: Vec<f64> = a.col(k)[k..].to_vec();
    let nrm = crate::dense::nrm2_slice(&x);
    if nrm == 0.0 {
        return Ok(Vec::new());
    }
    let x1 = x[0];
    let norm = if x1 >= 0.0 { -nrm } else { nrm };
    let beta = x1 - norm;
    let tau = -beta / norm;
    let mut out = Vec::with_capacity(n - k - 1);
    for i in k + 1..n {
        let col = &mut a.col_mut(i)[k..];
        let mut b = col[0] * beta;
        let s = if x.len() > 1 { dot_slices(&x[1..], &col[1..]) } else { 0.0 };
        b = (b + s) / (norm * beta);
        col[0] += beta * b;
        for (aj, &xj) in col[1..].iter_mut().zip(&x[1..]) {
            *aj += xj * b;
        }
        out.push(FusedUpdateScalars {
            b,
            s,
            beta_scalar: beta,
            norm,
            tau,
        });
    }
    let pivot = &mut a.col_mut(k)[k..];
    pivot[0] = norm;
    for p in &mut pivot[1..] {
        *p /= beta;
    }
    Ok(out)
}

/// Reflector for column `k` of `a`, as used by [`fused_update`].
pub fn reflector_for_column(a: &Matrix, k: usize) -> Result<HouseholderReflector> {
    make_reflector(&a.col_view(k, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classic::{apply_reflector_classic, geqr2};
    use crate::dense::gemm;

    const EPS: f64 = f64::EPSILON;

    #[test]
    fn macro_op_examples() {
        assert_eq!(fused_macro_op(1.0, 0.0, 7.0), 1.0);
        assert_eq!(fused_macro_op(5.0, 1.0, 2.0), 1.0);
    }

    #[test]
    fn unit_reflector_negates_first_active_row() {
        let mut a = Matrix::from_rows(&[&[-1.0, 2.0, 3.0], &[0.0, 4.0, 5.0], &[0.0, 6.0, 7.0]]).unwrap();
        let refl = reflector_for_column(&a, 0).unwrap();
        assert_eq!(refl.v, vec![-1.0, 0.0, 0.0]);
        fused_update(&mut a, &refl, 0).unwrap();
        assert_eq!(a.get(0, 1), -2.0);
        assert_eq!(a.get(0, 2), -3.0);
        assert_eq!(a.get(1, 1), 4.0);
        assert_eq!(a.get(2, 2), 7.0);
        assert_eq!(a.get(0, 0), 1.0);
    }

    #[test]
    fn three_by_three_worked_case() {
        let a = Matrix::from_rows(&[&[4.0, 1.0, -2.0], &[2.0, 3.0, 0.5], &[-1.0, 5.0, 2.5]]).unwrap();
        let refl = reflector_for_column(&a, 0).unwrap();
        let v = &refl.v;
        let alpha1 = v[0] * a.get(0, 1) + v[1] * a.get(1, 1) + v[2] * a.get(2, 1);
        let alpha2 = v[0] * a.get(0, 2) + v[1] * a.get(1, 2) + v[2] * a.get(2, 2);
        let explicit = gemm(&refl.explicit(), &a, None).unwrap();
        let mut got = a.clone();
        fused_update(&mut got, &refl, 0).unwrap();
        for (i, &vi) in v.iter().enumerate() {
            let e1 = a.get(i, 1) - 2.0 * vi * alpha1;
            let e2 = a.get(i, 2) - 2.0 * vi * alpha2;
            let scale = a.frobenius_norm();
            assert!((got.get(i, 1) - e1).abs() <= 4.0 * EPS * scale);
            assert!((got.get(i, 2) - e2).abs() <= 4.0 * EPS * scale);
            assert!((got.get(i, 1) - explicit.get(i, 1)).abs() <= 4.0 * EPS * scale);
        }
        assert!((fused_macro_op(a.get(0, 1), v[0], alpha1) - explicit.get(0, 1)).abs() <= 4.0 * EPS * 8.0);
    }

    #[test]
    fn fused_matches_classic_on_panel() {
        let a = Matrix::from_fn(8, 5, |i, j| ((i * 13 + j * 7) % 17) as f64 / 3.0 - 2.5);
        let refl = reflector_for_column(&a, 0).unwrap();
        let mut fused = a.clone();
        fused_update(&mut fused, &refl, 0).unwrap();
        let mut classic = a.clone();
        apply_reflector_classic(&refl, &mut classic, 0, 1..5).unwrap();
        let tol = 32.0 * 8.0 * EPS * a.frobenius_norm();
        for j in 1..5 {
            for i in 0..8 {
                assert!((fused.get(i, j) - classic.get(i, j)).abs() <= tol);
            }
        }
    }

    #[test]
    fn inconsistent_reflector_rejected() {
        let mut a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let other = Matrix::from_rows(&[&[5.0, 0.0], &[1.0, 0.0]]).unwrap();
        let refl = reflector_for_column(&other, 0).unwrap();
        assert!(fused_update(&mut a, &refl, 0).is_err());
        let short = reflector_for_column(&Matrix::from_rows(&[&[1.0]]).unwrap(), 0).unwrap();
        assert!(fused_update(&mut a, &short, 0).is_err());
    }

    #[test]
    fn geqr2ht_small_cases() {
        let f = geqr2ht(&Matrix::identity(4)).unwrap();
        for i in 0..4 {
            assert_eq!(f.r().get(i, i).abs(), 1.0);
        }
        let a = Matrix::from_fn(3, 3, |i, j| (i + 1 + 3 * j) as f64);
        let r_ht = geqr2(&a).unwrap().r();
        let r_mht = geqr2ht(&a).unwrap().r();
        assert!(r_ht.sub(&r_mht).unwrap().max_abs() <= 32.0 * 3.0 * EPS * a.frobenius_norm());
    }

    #[test]
    fn geqrfht_triangular_input() {
        let a = Matrix::from_diag(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        for bs in [1, 3, 8] {
            let r = geqrfht(&a, bs).unwrap().r();
            for i in 0..8 {
                assert_eq!(r.get(i, i).abs(), (i + 1) as f64);
            }
        }
    }

    #[test]
    fn literal_update_scalars_are_consistent() {
        let a = Matrix::from_fn(6, 4, |i, j| ((i * 5 + j * 11) % 13) as f64 - 6.0);
        let mut lit = a.clone();
        let scalars = literal_column_update(&mut lit, 0).unwrap();
        let refl = reflector_for_column(&a, 0).unwrap();
        for (j, s) in scalars.iter().enumerate() {
            assert!((s.tau * s.norm + s.beta_scalar).abs() <= 2.0 * EPS * s.beta_scalar.abs());
            let vta = dot_slices(&refl.v, a.col(j + 1));
            assert!((s.b * -refl.r - vta).abs() <= 64.0 * EPS * a.frobenius_norm());
        }
    }
}
