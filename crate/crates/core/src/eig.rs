//! Unshifted QR iteration `A <- R Q` driven by the fused factorization.

use serde::{Deserialize, Serialize};

use crate::dense::{gemm, Matrix};
use crate::error::{Error, Result};
use crate::modified::geqr2ht;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    /// Diagonal of the final iterate, largest first.
    pub eigenvalues: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest subdiagonal magnitude of the final iterate.
    pub off_diagonal: f64,
    /// Whether the input was symmetric within the tolerance.
    pub symmetric: bool,
}

/// Largest magnitude below the diagonal. Iterates of a symmetric input stay
/// symmetric; a general input converges towards upper triangular form.
fn max_subdiagonal(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in j + 1..n {
            worst = worst.max(a.get(i, j).abs());
        }
    }
    worst
}

fn is_symmetric(a: &Matrix, tol: f64) -> bool {
    let n = a.rows();
    let scale = a.max_abs().max(1.0);
    (0..n).all(|j| (0..j).all(|i| (a.get(i, j) - a.get(j, i)).abs() <= tol * scale))
}

/// Runs at least one iteration and stops once every subdiagonal entry is
/// below `tol` in magnitude or after `max_iters` iterations.
pub fn qr_eigenvalues(a: &Matrix, max_iters: usize, tol: f64) -> Result<EigenReport> {
    if !a.is_square() {
        return Err(Error::dim(format!(
            "eigenvalues need a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if a.rows() == 0 {
        return Err(Error::dim("empty matrix"));
    }
    if max_iters == 0 {
        return Err(Error::Config("iteration cap must be positive".into()));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let symmetric = is_symmetric(a, tol.max(f64::EPSILON));
    let mut current = a.clone();
    let mut iterations = 0;
    let mut off = max_subdiagonal(&current);
    let mut converged = false;
    while iterations < max_iters {
        let f = geqr2ht(&current)?;
        current = gemm(&f.r(), &f.form_q(), None)?;
        iterations += 1;
        off = max_subdiagonal(&current);
        if off < tol {
            converged = true;
            break;
        }
    }
    let mut eigenvalues: Vec<f64> = (0..current.rows()).map(|i| current.get(i, i)).collect();
    eigenvalues.sort_by(|x, y| y.total_cmp(x));
    Ok(EigenReport {
        eigenvalues,
        iterations,
        converged,
        off_diagonal: off,
        symmetric,
    })
}

/// `n x n` tridiagonal matrix with 2 on the diagonal and -1 beside it.
pub fn second_difference(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0,
        1 => -1.0,
        _ => 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input_converges_immediately() {
        let rep = qr_eigenvalues(&Matrix::from_diag(&[1.0, 3.0]), 10, 1e-12).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert_eq!(rep.eigenvalues, vec![3.0, 1.0]);
    }

    #[test]
    fn two_by_two_symmetric() {
        let a = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let rep = qr_eigenvalues(&a, 500, 1e-12).unwrap();
        assert!(rep.converged && rep.symmetric);
        assert!((rep.eigenvalues[0] - 3.0).abs() <= 1e-10);
        assert!((rep.eigenvalues[1] - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn second_difference_spectrum() {
        let rep = qr_eigenvalues(&second_difference(4), 500, 1e-12).unwrap();
        assert!(rep.converged);
        let mut expected: Vec<f64> = (1..=4)
            .map(|k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / 5.0).cos())
            .collect();
        expected.sort_by(|x, y| y.total_cmp(x));
        for (got, want) in rep.eigenvalues.iter().zip(&expected) {
            assert!((got - want).abs() <= 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn rejects_non_square_and_flags_asymmetry() {
        assert!(qr_eigenvalues(&Matrix::zeros(2, 3), 10, 1e-12).is_err());
        let a = Matrix::from_rows(&[&[2.0, 1.0], &[0.0, 1.0]]).unwrap();
        let rep = qr_eigenvalues(&a, 50, 1e-12).unwrap();
        assert!(!rep.symmetric && rep.converged);
        assert_eq!(rep.eigenvalues, vec![2.0, 1.0]);
    }
}
