use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pkm_core::irsbot2::default_model;
use pkm_embed::model_file::ModelFile;

fn pkm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pkm-embed")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn nested_run_writes_one_row_per_sample() {
    let d = tempfile::tempdir().unwrap();
    let o = pkm(&["run", "--model", "irsbot2", "--experiment", "ik_nested", "--dt", "1e-3", "--out", "res"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&d.path().join("res/ik.csv"));
    assert_eq!(rows.len(), 1001);
    assert_eq!(h.len(), 1 + 2 * (27 + 4));
    for name in ["t", "theta1_1", "theta2_9", "theta_dot1_5", "theta_ddot2_9", "outer_iters1", "inner_iters_total2", "err_x1", "err_g2"] {
        assert!(h.iter().any(|c| c == name), "{name}");
    }
    assert!(rows.iter().flatten().all(|x| x.is_finite()));
    assert_eq!(rows[1000][0], 1.0);
    assert!(!d.path().join("res/ik.csv.error").exists());
}

#[test]
fn identical_configurations_give_identical_files() {
    let d = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = pkm(&["run", "--experiment", "invdyn", "--dt", "1e-2", "--out", out], d.path());
        assert!(o.status.success());
    }
    let a = fs::read(d.path().join("a/invdyn.csv")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b/invdyn.csv")).unwrap());
    let (h, rows) = read_csv(&d.path().join("a/invdyn.csv"));
    assert_eq!(h, ["t", "u1", "u2", "kinetic_energy", "power_residual"]);
    assert_eq!(rows.len(), 101);
}

#[test]
fn unreachable_singularity_path_leaves_partial_output_with_a_marker() {
    let d = tempfile::tempdir().unwrap();
    let o = pkm(&["run", "--experiment", "singularity", "--out", "."], d.path());
    assert_eq!(o.status.code(), Some(4));
    let (h, rows) = read_csv(&d.path().join("singularity.csv"));
    assert!(h.iter().any(|c| c == "cond_sqrt_kappa1") && h.iter().any(|c| c == "cond_sqrt_kappa2"));
    assert!(!rows.is_empty() && rows.len() < 1001);
    let marker = fs::read_to_string(d.path().join("singularity.csv.error")).unwrap();
    assert!(marker.contains(&format!("{} of 1001", rows.len())));
    let diag = fs::read_to_string(d.path().join("diagnostics.txt")).unwrap();
    assert!(diag.contains(&format!("failing step: {}", rows.len())), "{diag}");
    assert!(diag.contains("limb: 1"));
}

#[test]
fn a_later_successful_run_clears_the_marker() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(pkm(&["run", "--experiment", "singularity", "--dt", "1e-2"], d.path()).status.code(), Some(4));
    let cfg = d.path().join("c.json");
    fs::write(&cfg, r#"{"experiment": "singularity", "trajectory": {"dt": 0.01, "dz": -0.3}}"#).unwrap();
    let o = pkm(&["run", "--config", "c.json"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!d.path().join("singularity.csv.error").exists());
    assert_eq!(read_csv(&d.path().join("singularity.csv")).1.len(), 101);
}

#[test]
fn bad_arguments_exit_with_the_configuration_code() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--experiment", "sideways"],
        vec!["run", "--dt", "-1"],
        vec!["run", "--mode", "closed"],
        vec!["run", "--solver", "newton"],
        vec!["run", "--experiment", "ik_nested", "--solver", "compound"],
        vec!["run", "--config", "missing.json"],
        vec!["run", "--dt", "fast"],
        vec!["validate", "--suite", "nope"],
        vec!["frobnicate"],
    ] {
        let o = pkm(&args, d.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn unreadable_model_exits_with_the_model_code() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("m.json"), "{}").unwrap();
    for model in ["m.json", "absent.json"] {
        assert_eq!(pkm(&["run", "--model", model], d.path()).status.code(), Some(3));
    }
}

#[test]
fn validation_passes_on_the_built_in_model() {
    let d = tempfile::tempdir().unwrap();
    let o = pkm(&["validate", "--states", "20"], d.path());
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS ")).count(), pkm_embed::validate::SUITES.len());
}

#[test]
fn suite_filter_runs_only_the_named_suite() {
    let d = tempfile::tempdir().unwrap();
    let o = pkm(&["validate", "--suite", "fd-jacobian"], d.path());
    let out = stdout(&o);
    assert!(o.status.success());
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("PASS fd-jacobian ("));
}

#[test]
fn perturbed_cut_anchor_fails_the_residual_suite() {
    let d = tempfile::tempdir().unwrap();
    let o = pkm(&["export-model", "--out", "m.json"], d.path());
    assert!(o.status.success());
    let mut f: ModelFile = serde_json::from_str(&fs::read_to_string(d.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(f.to_model().unwrap(), default_model());

    let o = pkm(&["validate", "--model", "m.json", "--suite", "constraint-residual"], d.path());
    assert!(o.status.success(), "{}", stdout(&o));

    f.limbs[1].cycles[1].cut.d_r[2] += 1e-3;
    fs::write(d.path().join("bad.json"), f.to_json()).unwrap();
    let o = pkm(&["validate", "--model", "bad.json", "--suite", "constraint-residual"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("FAIL constraint-residual"));
}

#[test]
fn exported_model_reproduces_the_built_in_results() {
    let d = tempfile::tempdir().unwrap();
    assert!(pkm(&["export-model", "--mode", "cut_joint", "--out", "m.json"], d.path()).status.success());
    let a = pkm(&["run", "--model", "m.json", "--experiment", "ik_compound", "--dt", "1e-2", "--out", "a"], d.path());
    let b = pkm(&["run", "--mode", "cut_joint", "--experiment", "ik_compound", "--dt", "1e-2", "--out", "b"], d.path());
    assert!(a.status.success() && b.status.success());
    assert_eq!(fs::read(d.path().join("a/ik.csv")).unwrap(), fs::read(d.path().join("b/ik.csv")).unwrap());
}
