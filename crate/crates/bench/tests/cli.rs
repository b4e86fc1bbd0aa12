use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use stls_bench::io::{format_csv, read_matrix_auto};
use stls_core::linalg::singular_values;
use stls_core::random::{gaussian, rng};

fn stls(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stls"))
        .args(args)
        .current_dir(dir)
        .env_remove("STLS_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, a: &DMatrix<f64>) {
    std::fs::write(dir.join(name), format_csv(a)).unwrap();
}

fn error_line(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr line");
    serde_json::from_str(line).expect("stderr is JSON")
}

fn diagnostics(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("diagnostics.json")).unwrap()).unwrap()
}

#[test]
fn svd_correction_is_smallest_singular_value() {
    let tmp = tempfile::tempdir().unwrap();
    let a = gaussian(&mut rng(11), 20, 5);
    write(tmp.path(), "a.csv", &a);
    let out = stls(
        &["solve", "--input", "a.csv", "--method", "svd", "--out", "res"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let e = read_matrix_auto(&tmp.path().join("res/e_hat.csv")).unwrap();
    let a_hat = read_matrix_auto(&tmp.path().join("res/a_hat.csv")).unwrap();
    let s = singular_values(&a).unwrap();
    assert!((e.norm() - s[4]).abs() <= 1e-12 * s[0]);
    assert!((&a_hat + &e - &a).amax() <= 1e-14 * a.amax());
    let d = diagnostics(&tmp.path().join("res"));
    assert!(d["alpha"].is_null());
    assert_eq!(d["rank"], 4);
    for key in ["alpha", "iterations", "feas_residual", "rank", "converged"] {
        assert!(d.get(key).is_some(), "{key}");
    }
}

#[test]
fn all_fixed_mask_is_rank_infeasible() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "a.csv", &gaussian(&mut rng(12), 5, 5));
    write(tmp.path(), "mask.csv", &DMatrix::from_element(5, 5, 1.0));
    let out = stls(
        &[
            "solve",
            "--input",
            "a.csv",
            "--structure",
            "mask:mask.csv",
            "--method",
            "rwnn",
            "--out",
            "res",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_line(&out)["category"], "rank-infeasible");
}

#[test]
fn reweighting_does_not_lose_to_nuclear_norm() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "a.csv", &gaussian(&mut rng(13), 6, 6));
    let mut errs = Vec::new();
    for m in ["nn", "rwnn"] {
        let out = stls(&["solve", "--input", "a.csv", "--method", m, "--out", m], tmp.path());
        assert!(out.status.success());
        let d = diagnostics(&tmp.path().join(m));
        assert_eq!(d["converged"], true);
        assert!(d["feas_residual"].as_f64().unwrap() <= 1e-8);
        errs.push(d["relative_error"].as_f64().unwrap());
    }
    assert!(errs[1] <= errs[0], "{errs:?}");
}

#[test]
fn ragged_input_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("a.csv"), "1,2\n3\n").unwrap();
    let out = stls(
        &["solve", "--input", "a.csv", "--method", "svd", "--out", "res"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let err = error_line(&out);
    assert_eq!(err["category"], "parse");
    assert!(err["message"].as_str().unwrap().contains("line 2"));
    let missing = stls(
        &["solve", "--input", "nope.csv", "--method", "svd", "--out", "res"],
        tmp.path(),
    );
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(error_line(&missing)["category"], "io");
}

#[test]
fn bad_flags_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "a.csv", &gaussian(&mut rng(14), 4, 3));
    for args in [
        vec!["solve", "--input", "a.csv", "--method", "qr", "--out", "r"],
        vec!["solve", "--input", "a.csv", "--method", "nn"],
        vec![
            "solve",
            "--input",
            "a.csv",
            "--method",
            "nn",
            "--out",
            "r",
            "--structure",
            "hankel",
        ],
        vec![
            "solve",
            "--input",
            "a.csv",
            "--method",
            "nn",
            "--out",
            "r",
            "--mu-growth",
            "0.5",
        ],
        vec!["experiment", "--name", "fig7"],
        vec!["frobnicate"],
    ] {
        let out = stls(&args, tmp.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(error_line(&out)["category"], "usage");
    }
    assert_eq!(stls(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn structured_solver_rejected_by_svd() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "a.csv", &gaussian(&mut rng(15), 4, 4));
    let out = stls(
        &[
            "solve",
            "--input",
            "a.csv",
            "--structure",
            "toeplitz",
            "--method",
            "svd",
            "--out",
            "r",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_line(&out)["category"], "structure-not-supported");
}

#[test]
fn experiment_csv_is_reproducible_and_seeded_from_env() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_stls"))
            .args([
                "experiment",
                "--name",
                "fig2b",
                "--sizes",
                "4",
                "--trials",
                "3",
                "--out",
                out,
            ])
            .env("STLS_SEED", seed)
            .current_dir(tmp.path())
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(tmp.path().join(out)).unwrap()
    };
    let a = run("5", "a.csv");
    assert_eq!(a, run("5", "b.csv"));
    assert_ne!(a, run("6", "c.csv"));
    let text = String::from_utf8(a).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "experiment,n,param,trial,method,metric,value,error"
    );
    assert_eq!(text.lines().count(), 1 + 3 * 2);
}

#[test]
fn hetero_synthetic_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stls(
        &["hetero", "--synthetic", "--method", "svd", "--seed", "2", "--out", "h"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let u = read_matrix_auto(&tmp.path().join("h/u.csv")).unwrap();
    assert_eq!(u.shape(), (2, 6));
    let d = diagnostics(&tmp.path().join("h"));
    assert!(d["cosine"].as_f64().unwrap() > 0.9999);
}
