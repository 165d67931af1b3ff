//! CSV result files, error markers and diagnostics.
//!
//! `ik.csv`: `t`, then per limb `l`: `theta{l}_{i}`, `theta_dot{l}_{i}`,
//! `theta_ddot{l}_{i}` (rad, rad/s, rad/s²), `outer_iters{l}`,
//! `inner_iters_total{l}`, `err_x{l}`, `err_g{l}`.
//! `invdyn.csv`: `t`, `u1`…`u{n}` (N·m), `kinetic_energy` (J),
//! `power_residual` (W).
//! `singularity.csv`: the `ik.csv` columns plus `cond_sqrt_kappa{l}`.

use std::fs;
use std::path::{Path, PathBuf};

use pkm_core::irsbot2::{ExperimentKind, ExperimentReport, StepRecord};
use pkm_core::Error;

use crate::CliError;

pub const DIAGNOSTICS: &str = "diagnostics.txt";

pub fn file_name(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::IkNested | ExperimentKind::IkCompound => "ik.csv",
        ExperimentKind::InvDyn => "invdyn.csv",
        ExperimentKind::Singularity => "singularity.csv",
    }
}

pub fn marker_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".error");
    PathBuf::from(s)
}

/// Column names for a report whose limbs have `n_vars` variables each.
pub fn header(kind: ExperimentKind, n_vars: &[usize], n_act: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    if kind == ExperimentKind::InvDyn {
        h.extend((1..=n_act).map(|i| format!("u{i}")));
        h.push("kinetic_energy".into());
        h.push("power_residual".into());
        return h;
    }
    for (l, &n) in n_vars.iter().enumerate() {
        let l = l + 1;
        for name in ["theta", "theta_dot", "theta_ddot"] {
            h.extend((1..=n).map(|i| format!("{name}{l}_{i}")));
        }
        for name in ["outer_iters", "inner_iters_total", "err_x", "err_g"] {
            h.push(format!("{name}{l}"));
        }
    }
    if kind == ExperimentKind::Singularity {
        h.extend((1..=n_vars.len()).map(|l| format!("cond_sqrt_kappa{l}")));
    }
    h
}

/// Numeric cells of one sample, or `None` when a required value is missing.
pub fn row(kind: ExperimentKind, s: &StepRecord) -> Option<Vec<f64>> {
    let mut r = vec![s.t];
    if kind == ExperimentKind::InvDyn {
        r.extend(s.u.as_ref()?.iter());
        r.push(s.energy.as_ref()?.kinetic);
        r.push(s.power_residual?);
        return Some(r);
    }
    for l in &s.limbs {
        r.extend(l.theta.iter().chain(&l.theta_dot).chain(&l.theta_ddot));
        r.extend([l.outer_iterations as f64, l.inner_total as f64, l.error_x, l.error_g]);
    }
    if kind == ExperimentKind::Singularity {
        r.extend(s.limbs.iter().map(|l| l.cond_sqrt_kappa));
    }
    Some(r)
}

/// Shortest representation that reads back to the same value.
fn cell(x: f64) -> String {
    format!("{x:?}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn diagnostics(report: &ExperimentReport, err: &Error) -> String {
    let mut d = format!("experiment: {:?}\nerror: {err}\n", report.kind);
    if let Error::Context { limb, cycle, step, .. } = err {
        if let Some(k) = step {
            let t = *k as f64 * report.spec.dt;
            d.push_str(&format!("failing step: {k}\nfailing time: {t}\n"));
        }
        if let Some(l) = limb {
            d.push_str(&format!("limb: {}\n", l + 1));
        }
        if let Some(c) = cycle {
            d.push_str(&format!("loop: {}\n", c + 1));
        }
    }
    d.push_str(&format!("root cause: {}\n", err.root()));
    d.push_str(&format!("completed samples: {} of {}\n", report.steps.len(), report.spec.n_samples()));
    if let Some(s) = report.steps.last() {
        for (l, r) in s.limbs.iter().enumerate() {
            d.push_str(&format!(
                "last accepted sample, limb {}: t={} outer={} inner_total={} err_x={:e} err_g={:e} cond_sqrt_kappa={:e}\n",
                l + 1,
                s.t,
                r.outer_iterations,
                r.inner_total,
                r.error_x,
                r.error_g,
                r.cond_sqrt_kappa
            ));
        }
    }
    d
}

/// Outcome of writing a report.
#[derive(Clone, Debug, PartialEq)]
pub struct Written {
    pub csv: PathBuf,
    pub rows: usize,
    /// Failure description when the run did not complete.
    pub failure: Option<String>,
}

/// Writes the report's CSV file. Samples up to the first failure (solver
/// error or non-finite value) are kept, and a failure is flagged by an error
/// marker next to the CSV file plus a diagnostics file.
pub fn write_report(dir: &Path, report: &ExperimentReport, n_vars: &[usize], n_act: usize) -> Result<Written, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let csv_path = dir.join(file_name(report.kind));
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header(report.kind, n_vars, n_act)).map_err(io)?;
    let mut failure = report.failure.as_ref().map(|e| diagnostics(report, e));
    let mut rows = 0;
    for (k, s) in report.steps.iter().enumerate() {
        match row(report.kind, s) {
            Some(r) if r.iter().all(|x| x.is_finite()) => {
                w.write_record(r.iter().map(|x| cell(*x))).map_err(io)?;
                rows += 1;
            }
            _ => {
                failure = Some(format!(
                    "experiment: {:?}\nerror: non-finite or missing value\nfailing step: {k}\nfailing time: {}\n",
                    report.kind, s.t
                ));
                break;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    let marker = marker_path(&csv_path);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| CliError::Io(format!("{}: {e}", marker.display())))?;
    }
    if let Some(d) = &failure {
        write_atomic(&dir.join(DIAGNOSTICS), d.as_bytes())?;
        write_atomic(&marker, format!("incomplete: {rows} of {} samples written; see {DIAGNOSTICS}\n", report.spec.n_samples()).as_bytes())?;
    }
    write_atomic(&csv_path, &bytes)?;
    Ok(Written { csv: csv_path, rows, failure })
}
