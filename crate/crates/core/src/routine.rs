use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classic::{geqr2, geqrf, QrFactorization};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::modified::{geqr2ht, geqrfht};

/// Block size used by the blocked routines when none is given.
pub const DEFAULT_BLOCK_SIZE: usize = 16;

/// The four factorization routines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Routine {
    /// Unblocked classical transform.
    Ht,
    /// Unblocked fused (modified) transform.
    Mht,
    /// Blocked classical transform.
    BlockedHt,
    /// Blocked with fused panels.
    BlockedMht,
}

impl Routine {
    pub const ALL: [Routine; 4] = [Routine::Ht, Routine::Mht, Routine::BlockedHt, Routine::BlockedMht];

    pub fn name(self) -> &'static str {
        match self {
            Routine::Ht => "ht",
            Routine::Mht => "mht",
            Routine::BlockedHt => "blocked-ht",
            Routine::BlockedMht => "blocked-mht",
        }
    }

    pub fn is_blocked(self) -> bool {
        matches!(self, Routine::BlockedHt | Routine::BlockedMht)
    }

    pub fn is_fused(self) -> bool {
        matches!(self, Routine::Mht | Routine::BlockedMht)
    }

    /// Runs the routine; `block_size` is ignored by the unblocked ones and is
    /// clamped to the column count for the blocked ones.
    pub fn factor(self, a: &Matrix, block_size: usize) -> Result<QrFactorization> {
        let bs = block_size.min(a.cols());
        match self {
            Routine::Ht => geqr2(a),
            Routine::Mht => geqr2ht(a),
            Routine::BlockedHt => geqrf(a, bs),
            Routine::BlockedMht => geqrfht(a, bs),
        }
    }
}

impl fmt::Display for Routine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Routine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ht" | "geqr2" => Ok(Routine::Ht),
            "mht" | "geqr2ht" => Ok(Routine::Mht),
            "blocked-ht" | "bht" | "geqrf" => Ok(Routine::BlockedHt),
            "blocked-mht" | "bmht" | "geqrfht" => Ok(Routine::BlockedMht),
            other => Err(Error::Config(format!("unknown routine {other:?}"))),
        }
    }
}

/// Backward error and loss of orthogonality of a factorization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorizationCheck {
    /// `||A - QR||_F / ||A||_F` (absolute when `A` is zero).
    pub residual: f64,
    /// `||Q^T Q - I||_F`.
    pub orthogonality: f64,
    /// Every entry of `R` below the diagonal is exactly zero.
    pub triangular_ok: bool,
}

pub fn check_factorization(a: &Matrix, f: &QrFactorization) -> Result<FactorizationCheck> {
    let q = f.form_q();
    let r = f.r();
    let qr = crate::dense::gemm(&q, &r, None)?;
    let scale = a.frobenius_norm();
    let diff = a.sub(&qr)?.frobenius_norm();
    let residual = if scale > 0.0 { diff / scale } else { diff };
    let qtq = crate::dense::gemm(&q.transpose(), &q, None)?;
    let orthogonality = qtq.sub(&Matrix::identity(q.rows()))?.frobenius_norm();
    let triangular_ok = (0..r.cols()).all(|j| (j + 1..r.rows()).all(|i| r.get(i, j) == 0.0));
    Ok(FactorizationCheck {
        residual,
        orthogonality,
        triangular_ok,
    })
}
