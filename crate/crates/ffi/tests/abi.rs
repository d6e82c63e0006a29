use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use hqr_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(hqr_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn round_trip_through_handles() {
    unsafe {
        let data = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut a = ptr::null_mut();
        assert_eq!(hqr_matrix_from_col_major(3, 2, data.as_ptr(), &mut a), HqrStatus::Ok);
        assert_eq!((hqr_matrix_rows(a), hqr_matrix_cols(a)), (3, 2));
        assert_eq!(hqr_matrix_set(a, 2, 1, -1.0), HqrStatus::Ok);
        let mut v = 0.0;
        assert_eq!(hqr_matrix_get(a, 2, 1, &mut v), HqrStatus::Ok);
        assert_eq!(v, -1.0);
        let mut buf = [0.0; 6];
        assert_eq!(hqr_matrix_copy_to(a, buf.as_mut_ptr(), buf.len()), HqrStatus::Ok);
        assert_eq!(buf, [1.0, 2.0, 3.0, 4.0, 5.0, -1.0]);
        assert_eq!(hqr_matrix_copy_to(a, buf.as_mut_ptr(), 5), HqrStatus::InvalidArgument);
        hqr_matrix_free(a);
    }
}

#[test]
fn every_routine_factors() {
    let data: Vec<f64> = (0..20).map(|k| ((k * 7 % 11) as f64) - 5.0).collect();
    for routine in [HQR_ROUTINE_HT, HQR_ROUTINE_MHT, HQR_ROUTINE_BLOCKED_HT, HQR_ROUTINE_BLOCKED_MHT] {
        unsafe {
            let mut a = ptr::null_mut();
            assert_eq!(hqr_matrix_from_col_major(5, 4, data.as_ptr(), &mut a), HqrStatus::Ok);
            let mut f = ptr::null_mut();
            assert_eq!(hqr_factor(a, routine, 2, &mut f), HqrStatus::Ok);
            let (mut res, mut orth) = (1.0, 1.0);
            assert_eq!(hqr_factorization_check(a, f, &mut res, &mut orth), HqrStatus::Ok);
            assert!(res < 1e-14 && orth < 1e-14);
            let (mut q, mut r) = (ptr::null_mut(), ptr::null_mut());
            assert_eq!(hqr_factorization_q(f, &mut q), HqrStatus::Ok);
            assert_eq!(hqr_factorization_r(f, &mut r), HqrStatus::Ok);
            assert_eq!((hqr_matrix_rows(q), hqr_matrix_cols(q)), (5, 5));
            assert_eq!((hqr_matrix_rows(r), hqr_matrix_cols(r)), (5, 4));
            let mut below = 1.0;
            assert_eq!(hqr_matrix_get(r, 3, 1, &mut below), HqrStatus::Ok);
            assert_eq!(below, 0.0);
            hqr_matrix_free(q);
            hqr_matrix_free(r);
            hqr_factorization_free(f);
            hqr_matrix_free(a);
        }
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut a = ptr::null_mut();
        assert_eq!(hqr_matrix_new(2, 4, &mut a), HqrStatus::Ok);
        let mut f = ptr::null_mut();
        assert_eq!(hqr_factor(a, HQR_ROUTINE_MHT, 0, &mut f), HqrStatus::WideMatrix);
        assert!(f.is_null());
        assert!(last_error().contains("wide matrix"));
        assert_eq!(hqr_factor(a, 9, 0, &mut f), HqrStatus::InvalidArgument);
        assert_eq!(hqr_factor(ptr::null(), HQR_ROUTINE_HT, 0, &mut f), HqrStatus::NullPointer);
        assert_eq!(hqr_matrix_new(2, 2, ptr::null_mut()), HqrStatus::NullPointer);
        let mut v = 0.0;
        assert_eq!(hqr_matrix_get(a, 2, 0, &mut v), HqrStatus::InvalidArgument);
        assert_eq!(hqr_matrix_rows(ptr::null()), 0);
        hqr_matrix_free(a);
        hqr_matrix_free(ptr::null_mut());
        hqr_factorization_free(ptr::null_mut());

        let mut speedup = 0.0;
        assert_eq!(hqr_simulate_tile_speedup(HQR_ROUTINE_MHT, 10, 3, &mut speedup), HqrStatus::Config);
        let msg = CStr::from_ptr(hqr_status_string(HqrStatus::Config));
        assert_eq!(msg.to_str().unwrap(), "configuration error");
    }
}

#[test]
fn analysis_entry_points() {
    unsafe {
        let mut theta = 0.0;
        assert_eq!(hqr_theta(4, 4, &mut theta), HqrStatus::Ok);
        assert!(theta > 0.0 && theta < 1.0);
        let (mut ht, mut mht) = (0u64, 0u64);
        assert_eq!(hqr_simulate_cycles(HQR_ROUTINE_HT, 16, 16, &mut ht), HqrStatus::Ok);
        assert_eq!(hqr_simulate_cycles(HQR_ROUTINE_MHT, 16, 16, &mut mht), HqrStatus::Ok);
        assert!(mht < ht);
        let mut speedup = 0.0;
        assert_eq!(hqr_simulate_tile_speedup(HQR_ROUTINE_MHT, 16, 1, &mut speedup), HqrStatus::Ok);
        assert_eq!(speedup, 1.0);
    }
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_against_static_library() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .and_then(|deps| deps.parent())
        .unwrap()
        .to_path_buf();
    let lib = target_dir.join("libhqr_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let out_dir = tempfile::tempdir().unwrap();
    let exe = out_dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("run cc");
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
