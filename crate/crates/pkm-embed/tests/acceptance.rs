//! Acceptance criteria 1 to 10. Each test prints one `PASS`/`FAIL` line,
//! written directly to stderr so that it shows without `--nocapture`.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3};
use pkm_core::dynamics::tree_eom;
use pkm_core::irsbot2::*;
use pkm_core::kinematics::platform_pose;
use pkm_core::se3::{revolute_screw, Mat6, Vec3};
use pkm_core::solver::{pkm_inverse_kinematics, solve_limb_ik, IkSettings, SolverKind};
use pkm_core::topology::{build_limb_graph, JointDef, JointKind};
use pkm_core::{LimbModel, Pose};
use pkm_embed::validate::{fidelity_report, Validator, FD_TOL};

fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("acceptance criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {n}: {detail}");
}

fn nominal(dt: f64) -> TrajectorySpec {
    TrajectorySpec::nominal(&IrsbotParams::default()).with_dt(dt)
}

fn settings(epsilon: f64) -> IkSettings {
    IkSettings { epsilon, epsilon1: epsilon, epsilon2: epsilon, ..IkSettings::default() }
}

/// Outer-iteration counts of every limb at every sample after the first.
/// The first sample starts on the exact reference solution and needs none.
fn outer_counts(r: &ExperimentReport) -> Vec<usize> {
    r.steps[1..].iter().flat_map(|s| s.limbs.iter().map(|l| l.outer_iterations)).collect()
}

#[test]
fn criterion_01_nested_iterations_on_the_nominal_path() {
    let clock = Instant::now();
    let r = run_experiment(&default_model(), ExperimentKind::IkNested, &nominal(1e-3), &settings(1e-10)).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    let outer = outer_counts(&r);
    let inner: Vec<usize> = r.steps[1..].iter().flat_map(|s| s.limbs.iter().flat_map(|l| l.inner_iterations.clone())).collect();
    let range = |v: &[usize]| (*v.iter().min().unwrap(), *v.iter().max().unwrap());
    let (o, i) = (range(&outer), range(&inner));
    let pass = r.is_complete() && o.0 >= 1 && o.1 <= 3 && i.0 >= 1 && i.1 <= 3 && secs < 10.0;
    report(1, pass, &format!("outer {}..{}, inner {}..{} per outer step, {} samples in {secs:.2} s", o.0, o.1, i.0, i.1, r.steps.len()));
}

#[test]
fn criterion_02_coarse_sampling_needs_three_iterations() {
    let r = run_experiment(&default_model(), ExperimentKind::IkNested, &nominal(1e-2), &settings(1e-10)).unwrap();
    let outer = outer_counts(&r);
    let share = outer.iter().filter(|&&n| n == 3).count() as f64 / outer.len() as f64;
    report(2, r.is_complete() && share >= 0.9, &format!("{:.1}% of limb steps take 3 outer iterations (need 90%)", 100.0 * share));
}

#[test]
fn criterion_03_point_to_point_converges_superlinearly() {
    let m = default_model();
    let target = Pose::from_translation(IrsbotParams::default().platform_reference() + Vector3::new(0.2, 0.0, 0.5));
    let r = solve_limb_ik(&m.limbs[0], &DVector::zeros(9), &target, &settings(1e-11)).unwrap();
    let e = &r.error_history;
    let tail = &e[e.len().saturating_sub(3)..];
    let c: Vec<f64> = tail.windows(2).map(|w| w[1] / w[0].powf(1.5)).collect();
    let pass = (5..=7).contains(&r.outer_iterations) && tail.len() == 3 && c.iter().all(|&c| c <= 10.0);
    let sci = |v: &[f64]| v.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(" ");
    report(3, pass, &format!("{} outer iterations, errors [{}], e(n+1)/e(n)^1.5 = [{}] (need <= 10)", r.outer_iterations, sci(e), sci(&c)));
}

#[test]
fn criterion_04_compound_scheme_iterations_and_agreement() {
    let m = default_model();
    let spec = nominal(1e-3);
    let compound = run_experiment(&m, ExperimentKind::IkCompound, &spec, &settings(1e-10)).unwrap();
    let nested = run_experiment(&m, ExperimentKind::IkNested, &spec, &settings(1e-10)).unwrap();
    let outer = outer_counts(&compound);
    let share = outer.iter().filter(|&&n| n == 3).count() as f64 / outer.len() as f64;
    let gap = compound
        .steps
        .iter()
        .zip(&nested.steps)
        .flat_map(|(a, b)| a.limbs.iter().zip(&b.limbs).map(|(x, y)| (&x.theta - &y.theta).amax()))
        .fold(0.0, f64::max);
    let hist: Vec<(usize, usize)> = (1..=4).map(|n| (n, outer.iter().filter(|&&k| k == n).count())).filter(|p| p.1 > 0).collect();
    let pass = compound.is_complete() && nested.is_complete() && share >= 0.9 && gap <= 1e-9;
    report(
        4,
        pass,
        &format!("{:.1}% of limb steps take exactly 3 iterations (need 90%), counts {hist:?}; max |theta_compound - theta_nested| {gap:.2e} (tol 1e-9)", 100.0 * share),
    );
}

#[test]
fn criterion_05_conditioning_peaks_along_the_singular_path() {
    let r = run_experiment(&default_model(), ExperimentKind::Singularity, &TrajectorySpec::singular(&IrsbotParams::default()), &settings(1e-10)).unwrap();
    let kappa: Vec<f64> = r.steps.iter().map(|s| s.limbs[0].cond_sqrt_kappa).collect();
    let mut sorted = kappa.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let peak = sorted[sorted.len() - 1];
    let outer = r.steps.iter().flat_map(|s| s.limbs.iter().map(|l| l.outer_iterations)).max().unwrap_or(0);
    let inner = r.steps.iter().flat_map(|s| s.limbs.iter().flat_map(|l| l.inner_iterations.clone())).max().unwrap_or(0);
    let failure = r.failure.as_ref().map_or("none".to_string(), |e| e.to_string());
    let pass = r.is_complete() && peak >= 10.0 * median && outer <= 4 && inner <= 2;
    report(
        5,
        pass,
        &format!(
            "{} of {} samples solved (failure: {failure}); limb 1 sqrt(kappa) peak/median {:.2} (need 10); max outer {outer}, max inner {inner}",
            r.steps.len(),
            r.spec.n_samples(),
            peak / median
        ),
    );
}

#[test]
fn criterion_06_constraints_hold_at_every_accepted_step() {
    let m = default_model();
    let samples = nominal(1e-3).samples();
    let zero = vec![DVector::zeros(9), DVector::zeros(9)];
    let mut lines = Vec::new();
    let mut pass = true;
    for kind in [SolverKind::Nested, SolverKind::Compound] {
        let path = pkm_inverse_kinematics(&m, &zero, &samples, &settings(1e-10), kind).unwrap();
        let r = fidelity_report("constraint-fidelity", &m, &path);
        pass &= r.passed();
        lines.push(format!("{kind:?}: {}", r.measurements.iter().map(|x| format!("{} {:.2e}", x.label, x.value)).collect::<Vec<_>>().join(", ")));
    }
    report(6, pass, &lines.join("; "));
}

#[test]
fn criterion_07_finite_difference_suites() {
    let m = default_model();
    let mut v = Validator::new(&m, nominal(1e-3), IkSettings::default(), 100, 2024);
    let mut pass = true;
    let mut parts = Vec::new();
    for s in ["fd-jacobian", "fd-jacobian-rate", "fd-complement-rate", "fd-task-rate", "fd-trajectory"] {
        let r = v.run(s).unwrap();
        pass &= r.passed() && r.checks >= 100 && r.measurements.iter().all(|x| x.tolerance == FD_TOL);
        let worst = r.measurements.iter().map(|x| x.value).fold(0.0, f64::max);
        parts.push(format!("{s} {worst:.1e} over {} checks", r.checks));
    }
    report(7, pass, &format!("max relative errors (tol 1e-4): {}", parts.join(", ")));
}

/// Planar double pendulum of point masses about y; body 3 is a massless leaf.
fn double_pendulum(m1: f64, m2: f64, l1: f64, l2: f64) -> LimbModel {
    let g = build_limb_graph(
        3,
        &[JointDef::new(1, JointKind::Revolute, 0, 1), JointDef::new(2, JointKind::Revolute, 1, 2), JointDef::new(3, JointKind::Revolute, 2, 3)],
        &[],
    )
    .unwrap();
    let p1 = Vec3::new(0.0, 0.0, -l1);
    let p2 = Vec3::new(0.0, 0.0, -l1 - l2);
    let point = |m: f64| spatial_inertia(m, &Vec3::zeros());
    LimbModel::new(
        g,
        &[vec![revolute_screw(&Vec3::y(), &Vec3::zeros())], vec![revolute_screw(&Vec3::y(), &p1)], vec![revolute_screw(&Vec3::y(), &p2)]],
        vec![Pose::identity(), Pose::from_translation(p1), Pose::from_translation(p2), Pose::from_translation(p2)],
        vec![],
        3,
        DMatrix::identity(6, 6).rows(0, 2).into_owned(),
        DMatrix::identity(2, 2),
    )
    .unwrap()
    .with_inertia(vec![Mat6::zeros(), point(m1), point(m2), Mat6::zeros()])
    .unwrap()
}

/// Largest deviation of the tree dynamics from the textbook double pendulum.
fn pendulum_error() -> f64 {
    let (m1, m2, l1, l2, g) = (1.3, 0.7, 0.8, 0.5, GRAVITY);
    let limb = double_pendulum(m1, m2, l1, l2);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let x = k as f64;
        let th = Vector2::new((0.7 * x).sin() * 3.0, (1.3 * x + 0.4).cos() * 3.0);
        let thd = Vector2::new((0.9 * x + 1.0).sin() * 2.0, (0.5 * x).cos() * 2.0);
        let (c2, s2, s12) = (th[1].cos(), th[1].sin(), (th[0] + th[1]).sin());
        let m12 = m2 * (l2 * l2 + l1 * l2 * c2);
        let mass = Matrix2::new(m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2), m12, m12, m2 * l2 * l2);
        let h = m2 * l1 * l2 * s2;
        let cor = Vector2::new(-h * (2.0 * thd[0] * thd[1] + thd[1] * thd[1]), h * thd[0] * thd[0]);
        let grav = Vector2::new((m1 + m2) * g * l1 * th[0].sin() + m2 * g * l2 * s12, m2 * g * l2 * s12);
        let t = tree_eom(&limb, &DVector::from_vec(vec![th[0], th[1], 0.0]), &DVector::from_vec(vec![thd[0], thd[1], 0.0]), &Vec3::new(0.0, 0.0, -g)).unwrap();
        worst = worst
            .max((t.mass - DMatrix::from_column_slice(2, 2, mass.as_slice())).amax())
            .max((t.coriolis - DVector::from_column_slice(cor.as_slice())).amax())
            .max((t.gravity - DVector::from_column_slice(grav.as_slice())).amax());
    }
    worst
}

#[test]
fn criterion_08_dynamics_oracles() {
    let pend = pendulum_error();
    let m = default_model();
    let mut v = Validator::new(&m, nominal(1e-3), IkSettings::default(), 100, 2024);
    let mult = v.run("multiplier-oracle").unwrap();
    let power = v.run("power-balance").unwrap();
    let pass = pend <= 1e-10 && mult.passed() && mult.checks >= 20 && power.passed();
    report(
        8,
        pass,
        &format!(
            "(a) pendulum max deviation {pend:.1e} (tol 1e-10); (b) multiplier oracle max relative deviation {:.1e} at {} states (tol 1e-6); (c) integrated power residual {:.1e} (tol 1e-3)",
            mult.measurements[0].value, mult.checks, power.measurements[0].value
        ),
    );
}

#[test]
fn criterion_09_model_constants_and_masses() {
    let m = default_model();
    let l = &m.limbs[0];
    let counts = (l.n_vars(), l.n_constraints(), l.dof(), m.task_dof(), l.cycles[1].n_constraints());
    let tab = [1.17188, 8.11899, 21.1875, 1.1781, 1.1781, 1.97754];
    let mm = default_mass_model(&IrsbotParams::default());
    let mass_err = mm.bodies.iter().zip(tab).map(|(b, t)| (b.mass - t).abs()).fold(0.0, f64::max);
    // Volume times density of each body's primitive at the half-size dimensions.
    let p = IrsbotParams::half_scale();
    let (b1, b3) = (p.b * (PI / 6.0).cos(), p.b * (PI / 6.0).sin());
    let rod = PI * (p.l2 / 30.0).powi(2) * p.l2;
    let volumes = [
        (0, p.l1 * (p.l1 / 6.0).powi(2)),
        (1, 2.0 * b1 * 2.0 * p.a * 2.0 * b3),
        (3, rod),
        (4, rod),
        (5, 4.0 * (p.a / 2.0) * 3.0 * (p.a / 2.0) * (p.a / 8.0)),
    ];
    let prim_err = volumes.iter().map(|&(i, v)| (v * ALUMINIUM_DENSITY - tab[i]).abs() / tab[i]).fold(0.0, f64::max);
    let pass = counts == (9, 6, 3, 2, 4) && mass_err <= 1e-3 && prim_err <= 1e-3;
    report(
        9,
        pass,
        &format!("(n_l, m_l, delta_l, delta_p, m_2) = {counts:?}; max mass deviation {mass_err:.1e} kg; max relative primitive mass deviation {prim_err:.1e} (tol 1e-3)"),
    );
}

#[test]
fn criterion_10_platform_reference_height() {
    let (s2, s3, s6) = (2f64.sqrt(), 3f64.sqrt(), 6f64.sqrt());
    let z = -(4.0 + 6.0 * s2 + (6.0 * (37.0 - 6.0 * s2 - 2.0 * s3 - 4.0 * s6)).sqrt()) / 24.0;
    let m = default_model();
    let err = m.limbs.iter().map(|l| (platform_pose(l, &DVector::zeros(9)).translation - Vector3::new(0.0, 0.0, z)).norm()).fold(0.0, f64::max);
    report(10, err <= 1e-12, &format!("closed-form height {z:.16}, max forward-kinematics deviation {err:.1e} m (tol 1e-12)"));
}
