//! C ABI over the `hqr` library.
//!
//! Objects are opaque heap handles created by `*_new`/`hqr_factor` style
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`HqrStatus`]; on failure [`hqr_last_error`] describes the most
//! recent error on the calling thread. Matrices are column-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hqr::sim::{simulate_pe, simulate_tile_array, CostConfig};
use hqr::{Error, Matrix, QrFactorization, Routine};

/// Classical unblocked routine.
pub const HQR_ROUTINE_HT: u32 = 0;
/// Fused unblocked routine.
pub const HQR_ROUTINE_MHT: u32 = 1;
/// Classical blocked routine.
pub const HQR_ROUTINE_BLOCKED_HT: u32 = 2;
/// Fused blocked routine.
pub const HQR_ROUTINE_BLOCKED_MHT: u32 = 3;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HqrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    WideMatrix = 4,
    Singular = 5,
    Config = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

/// Opaque dense matrix.
pub struct HqrMatrix(Matrix);

/// Opaque QR factorization.
pub struct HqrFactorization(QrFactorization);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(e: &Error) -> HqrStatus {
    match e {
        Error::Dimension(_) | Error::Parse { .. } | Error::EmptyDag => HqrStatus::Dimension,
        Error::WideMatrix { .. } => HqrStatus::WideMatrix,
        Error::Singular { .. } => HqrStatus::Singular,
        Error::BlockSize { .. } => HqrStatus::InvalidArgument,
        Error::Config(_) | Error::Io { .. } => HqrStatus::Config,
    }
}

/// Runs `body`, converting library errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), (HqrStatus, String)>) -> HqrStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => HqrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HqrStatus::Internal
        }
    }
}

fn lib<T>(r: hqr::Result<T>) -> Result<T, (HqrStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (HqrStatus, String) {
    (HqrStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (HqrStatus, String) {
    (HqrStatus::InvalidArgument, msg.into())
}

fn routine_of(code: u32) -> Result<Routine, (HqrStatus, String)> {
    match code {
        HQR_ROUTINE_HT => Ok(Routine::Ht),
        HQR_ROUTINE_MHT => Ok(Routine::Mht),
        HQR_ROUTINE_BLOCKED_HT => Ok(Routine::BlockedHt),
        HQR_ROUTINE_BLOCKED_MHT => Ok(Routine::BlockedMht),
        other => Err(invalid(format!("unknown routine code {other}"))),
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (HqrStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), (HqrStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn hqr_status_string(status: HqrStatus) -> *const c_char {
    let s: &'static CStr = match status {
        HqrStatus::Ok => c"ok",
        HqrStatus::NullPointer => c"null pointer",
        HqrStatus::InvalidArgument => c"invalid argument",
        HqrStatus::Dimension => c"dimension error",
        HqrStatus::WideMatrix => c"wide matrix unsupported",
        HqrStatus::Singular => c"singular matrix",
        HqrStatus::Config => c"configuration error",
        HqrStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

/// Message of the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hqr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Zero matrix of the given shape.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hqr_matrix_new(rows: usize, cols: usize, out: *mut *mut HqrMatrix) -> HqrStatus {
    guard(|| {
        let boxed = Box::new(HqrMatrix(Matrix::zeros(rows, cols)));
        write_out(out, Box::into_raw(boxed))
    })
}

/// Matrix copied from `rows * cols` column-major values.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn hqr_matrix_from_col_major(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut HqrMatrix,
) -> HqrStatus {
    guard(|| {
        let len = rows.checked_mul(cols).ok_or_else(|| invalid("shape overflows"))?;
        let values = if len == 0 {
            Vec::new()
        } else {
            if data.is_null() {
                return Err(null("data"));
            }
            std::slice::from_raw_parts(data, len).to_vec()
        };
        let m = lib(Matrix::from_col_major(rows, cols, values))?;
        write_out(out, Box::into_raw(Box::new(HqrMatrix(m))))
    })
}

/// Releases a matrix; null is ignored.
///
/// # Safety
/// `m` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hqr_matrix_free(m: *mut HqrMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Row count, or 0 for null.
///
/// # Safety
/// `m` must be null or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn hqr_matrix_rows(m: *const HqrMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// Column count, or 0 for null.
///
/// # Safety
/// `m` must be null or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn hqr_matrix_cols(m: *const HqrMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

fn check_index(m: &Matrix, i: usize, j: usize) -> Result<(), (HqrStatus, String)> {
    if i < m.rows() && j < m.cols() {
        Ok(())
    } else {
        Err(invalid(format!("index ({i}, {j}) outside {}x{}", m.rows(), m.cols())))
    }
}

/// # Safety
/// `m` must be a live matrix handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hqr_matrix_get(m: *const HqrMatrix, i: usize, j: usize, out: *mut f64) -> HqrStatus {
    guard(|| {
        let m = &deref(m, "matrix")?.0;
        check_index(m, i, j)?;
        write_out(out, m.get(i, j))
    })
}

/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn hqr_matrix_set(m: *mut HqrMatrix, i: usize, j: usize, value: f64) -> HqrStatus {
    guard(|| {
        let m = &mut m.as_mut().ok_or_else(|| null("matrix"))?.0;
        check_index(m, i, j)?;
        m.set(i, j, value);
        Ok(())
    })
}

/// Copies the entries column-major into `out`, which holds `len` doubles.
///
/// # Safety
/// `m` must be a live matrix handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn hqr_matrix_copy_to(m: *const HqrMatrix, out: *mut f64, len: usize) -> HqrStatus {
    guard(|| {
        let src = deref(m, "matrix")?.0.as_slice();
        if len < src.len() {
            return Err(invalid(format!("buffer of {len} cannot hold {} values", src.len())));
        }
        if !src.is_empty() {
            if out.is_null() {
                return Err(null("output buffer"));
            }
            ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
        }
        Ok(())
    })
}

/// Factors `a` with one of the `HQR_ROUTINE_*` codes. `block_size` is used
/// only by the blocked routines.
///
/// # Safety
/// `a` must be a live matrix handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hqr_factor(
    a: *const HqrMatrix,
    routine: u32,
    block_size: usize,
    out: *mut *mut HqrFactorization,
) -> HqrStatus {
    guard(|| {
        let a = &deref(a, "matrix")?.0;
        let routine = routine_of(routine)?;
        let f = lib(routine.factor(a, block_size))?;
        write_out(out, Box::into_raw(Box::new(HqrFactorization(f))))
    })
}

/// Explicit `m x m` orthogonal factor as a new matrix.
///
/// # Safety
/// `f` must be a live factorization handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hqr_factorization_q(f: *const HqrFactorization, out: *mut *mut HqrMatrix) -> HqrStatus {
    guard(|| {
        let q = deref(f, "factorization")?.0.form_q();
        write_out(out, Box::into_raw(Box::new(HqrMatrix(q))))
    })
}

/// Upper-triangular `m x n` factor as a new matrix.
///
/// # Safety
/// `f` must be a live factorization handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hqr_factorization_r(f: *const HqrFactorization, out: *mut *mut HqrMatrix) -> HqrStatus {
    guard(|| {
        let r = deref(f, "factorization")?.0.r();
        write_out(out, Box::into_raw(Box::new(HqrMatrix(r))))
    })
}

/// Relative residual `|A - QR|_F / |A|_F` and `|Q^T Q - I|_F`.
///
/// # Safety
/// Handles must be live; output pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hqr_factorization_check(
    a: *const HqrMatrix,
    f: *const HqrFactorization,
    residual: *mut f64,
    orthogonality: *mut f64,
) -> HqrStatus {
    guard(|| {
        let a = &deref(a, "matrix")?.0;
        let f = &deref(f, "factorization")?.0;
        if (f.m, f.n) != a.shape() {
            return Err(invalid("factorization does not match the matrix"));
        }
        let c = lib(hqr::check_factorization(a, f))?;
        write_out(residual, c.residual)?;
        write_out(orthogonality, c.orthogonality)
    })
}

/// Releases a factorization; null is ignored.
///
/// # Safety
/// `f` must come from [`hqr_factor`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hqr_factorization_free(f: *mut HqrFactorization) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Level-count ratio of the fused to the classical operation graph for an
/// `m x n` matrix.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hqr_theta(m: usize, n: usize, out: *mut f64) -> HqrStatus {
    guard(|| write_out(out, lib(hqr::theta(m, n))?))
}

/// Total cycles of one routine on a single processing element under the
/// default cost table.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hqr_simulate_cycles(routine: u32, m: usize, n: usize, out: *mut u64) -> HqrStatus {
    guard(|| {
        let rep = lib(simulate_pe(routine_of(routine)?, m, n, &CostConfig::default()))?;
        write_out(out, rep.total_cycles)
    })
}

/// Speedup of a `k x k` tile array over one tile for an `n x n` matrix under
/// the default cost table.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hqr_simulate_tile_speedup(routine: u32, n: usize, k: usize, out: *mut f64) -> HqrStatus {
    guard(|| {
        let rep = lib(simulate_tile_array(routine_of(routine)?, n, k, &CostConfig::default()))?;
        write_out(out, rep.speedup)
    })
}
