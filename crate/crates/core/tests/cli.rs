use std::fs;
use std::process::{Command, Output};

use hqr::{read_matrix_market, write_matrix_market, Matrix};

fn hqr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hqr"))
        .args(args)
        .output()
        .expect("spawn hqr")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn factor_identity_writes_exact_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("eye.mtx");
    write_matrix_market(&Matrix::identity(4), &input).unwrap();
    let outdir = dir.path().join("out");
    let out = hqr(&[
        "factor",
        "--input",
        input.to_str().unwrap(),
        "--output",
        outdir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_matrix_market(outdir.join("r.mtx")).unwrap();
    let q = read_matrix_market(outdir.join("q.mtx")).unwrap();
    for i in 0..4 {
        assert_eq!(r.get(i, i).abs(), 1.0);
        assert_eq!(q.get(i, i).abs(), 1.0);
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(outdir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["residual"], 0.0);
    assert_eq!(report["triangular_ok"], true);
}

#[test]
fn every_routine_factors_a_random_matrix() {
    for routine in ["ht", "mht", "blocked-ht", "blocked-mht"] {
        let out = hqr(&["factor", "--random", "30", "20", "--routine", routine, "--block", "6"]);
        assert!(out.status.success(), "{routine}");
        let report = json(&out);
        assert_eq!(report["m"], 30);
        assert!(report["residual"].as_f64().unwrap() < 1e-13);
    }
}

#[test]
fn wide_matrix_exits_with_status_two() {
    let out = hqr(&["factor", "--random", "3", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wide matrix unsupported"));
}

#[test]
fn usage_errors_exit_with_status_two() {
    assert_eq!(hqr(&["factor"]).status.code(), Some(2));
    assert_eq!(hqr(&["simulate", "--routine", "lu"]).status.code(), Some(2));
}

#[test]
fn analyze_emits_versioned_csv() {
    let out = hqr(&["analyze", "--sizes", "4,8,16"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema_version: 1"));
    assert_eq!(lines.next(), Some("n,theta,beta_ht,beta_mht"));
    let thetas: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(thetas.len(), 3);
    assert!(thetas.windows(2).all(|w| w[1] <= w[0]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("asymptote"));
}

#[test]
fn analyze_parallel_matches_serial() {
    let serial = hqr(&["analyze", "--sizes", "4,8,16,32", "--format", "json"]);
    let parallel = hqr(&["analyze", "--sizes", "4,8,16,32", "--format", "json", "--parallel"]);
    assert_eq!(serial.stdout, parallel.stdout);
}

#[test]
fn simulate_single_tile_has_unit_speedup() {
    let out = hqr(&["simulate", "--routine", "mht", "--n", "16", "--k", "1"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["tile_array"]["speedup"], 1.0);
    assert_eq!(v["tile_array"]["efficiency"], 1.0);
    assert_eq!(v["pe"]["total_cycles"], v["tile_array"]["total_cycles"]);
}

#[test]
fn simulate_reads_a_config_and_rejects_bad_ones() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("cfg.json");
    fs::write(&good, r#"{"issue_width": 2}"#).unwrap();
    let out = hqr(&["simulate", "--n", "12", "--config", good.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(json(&out)["config"]["issue_width"], 2);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"div": 0}"#).unwrap();
    assert_eq!(hqr(&["simulate", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn simulate_tile_array_reports_efficiency() {
    let out = hqr(&["simulate", "--n", "24", "--k", "2", "--format", "csv"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let row = text.lines().nth(2).unwrap();
    let eff: f64 = row.split(',').nth(7).unwrap().parse().unwrap();
    assert!(eff > 0.0 && eff <= 1.0);
}

#[test]
fn eig_on_second_difference() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.mtx");
    write_matrix_market(&hqr::eig::second_difference(4), &input).unwrap();
    let out = hqr(&["eig", "--input", input.to_str().unwrap()]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["result"]["converged"], true);
    let top = v["result"]["eigenvalues"][0].as_f64().unwrap();
    let want = 2.0 - 2.0 * (4.0 * std::f64::consts::PI / 5.0).cos();
    assert!((top - want).abs() <= 1e-8);
}

#[test]
fn eig_warns_on_asymmetric_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("u.mtx");
    write_matrix_market(&Matrix::from_rows(&[&[3.0, 1.0], &[0.0, 1.0]]).unwrap(), &input).unwrap();
    let out = hqr(&["eig", "--input", input.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not symmetric"));
}

#[test]
fn bench_emits_one_row_per_cell() {
    let out = hqr(&["bench", "--routines", "ht,mht", "--sizes", "8,16", "--repeats", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "routine,n,repeats,median_s,min_s,max_s");
    assert_eq!(lines.len(), 2 + 4);
}

#[test]
fn seeded_runs_are_bitwise_reproducible() {
    let args = ["factor", "--random", "12", "9", "--seed", "3", "--routine", "blocked-ht", "--block", "4"];
    assert_eq!(hqr(&args).stdout, hqr(&args).stdout);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let mut full = args.to_vec();
        full.extend(["--output", d.to_str().unwrap()]);
        assert!(hqr(&full).status.success());
    }
    for f in ["q.mtx", "r.mtx", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}
