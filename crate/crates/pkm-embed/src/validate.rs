//! Invariant suites run against a model: loop residuals at the reference,
//! finite-difference checks of the analytic derivatives, constraint fidelity
//! along a trajectory, and the dynamics oracles.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use pkm_core::constraints::limb_constraint_solution;
use pkm_core::dynamics::inverse_dynamics_step;
use pkm_core::irsbot2::{run_experiment_with, ExperimentKind, TrajectorySpec};
use pkm_core::kinematics::{frame_motion, system_jacobian, TreeKinematics};
use pkm_core::oracle::{body_jacobian_fd, cut_residual, multiplier_inverse_dynamics};
use pkm_core::solver::{limb_jacobians, pkm_inverse_kinematics, solve_limb_ik, tree_rates_from_task, IkSettings, PkmStep, SolverKind};
use pkm_core::{Error, LimbModel, PkmModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::CliError;

pub const SUITES: [&str; 9] = [
    "constraint-residual",
    "fd-jacobian",
    "fd-jacobian-rate",
    "fd-complement-rate",
    "fd-task-rate",
    "fd-trajectory",
    "constraint-fidelity",
    "multiplier-oracle",
    "power-balance",
];

/// Relative tolerance of the finite-difference suites.
pub const FD_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub label: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Measurement {
    pub fn new(label: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { label: label.into(), value, tolerance }
    }

    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    /// Number of individual comparisons behind the measurements.
    pub checks: usize,
    pub measurements: Vec<Measurement>,
    /// Set when the suite could not be evaluated.
    pub error: Option<String>,
}

impl SuiteReport {
    fn failed(name: &'static str, e: impl fmt::Display) -> Self {
        Self { name, checks: 0, measurements: vec![], error: Some(e.to_string()) }
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks > 0 && self.measurements.iter().all(Measurement::passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", if self.passed() { "PASS" } else { "FAIL" }, self.name)?;
        if let Some(e) = &self.error {
            return write!(f, ": {e}");
        }
        write!(f, " ({} checks)", self.checks)?;
        for m in &self.measurements {
            write!(f, "; {} {:.3e} (tol {:.0e})", m.label, m.value, m.tolerance)?;
        }
        Ok(())
    }
}

/// Largest-magnitude-relative error of `a` against the reference `b`, with
/// the denominator floored at `scale` for quantities that can vanish.
pub fn scaled_err(a: &DMatrix<f64>, b: &DMatrix<f64>, scale: f64) -> f64 {
    (a - b).norm() / b.norm().max(scale).max(1e-12)
}

/// A limb state on the constraint manifold with task-space rates.
#[derive(Clone, Debug)]
pub struct AdmissibleState {
    pub limb: usize,
    pub theta: DVector<f64>,
    pub theta_dot: DVector<f64>,
}

pub struct Validator<'a> {
    pub model: &'a PkmModel,
    pub spec: TrajectorySpec,
    pub settings: IkSettings,
    pub states: usize,
    rng: ChaCha8Rng,
    path: Option<Result<Vec<PkmStep>, Error>>,
}

fn tight(s: &IkSettings) -> IkSettings {
    IkSettings { epsilon: 1e-13, epsilon1: 1e-13, epsilon2: 1e-13, ..*s }
}

impl<'a> Validator<'a> {
    pub fn new(model: &'a PkmModel, spec: TrajectorySpec, settings: IkSettings, states: usize, seed: u64) -> Self {
        Self { model, spec, settings, states, rng: ChaCha8Rng::seed_from_u64(seed), path: None }
    }

    pub fn run(&mut self, name: &str) -> Result<SuiteReport, CliError> {
        Ok(match name {
            "constraint-residual" => self.constraint_residual(),
            "fd-jacobian" => self.fd_jacobian(),
            "fd-jacobian-rate" => self.fd_jacobian_rate(),
            "fd-complement-rate" => self.fd_complement_rate(),
            "fd-task-rate" => self.fd_task_rate(),
            "fd-trajectory" => self.fd_trajectory(),
            "constraint-fidelity" => self.constraint_fidelity(),
            "multiplier-oracle" => self.multiplier_oracle(),
            "power-balance" => self.power_balance(),
            other => return Err(CliError::Config(format!("unknown suite '{other}' (expected one of {})", SUITES.join(", ")))),
        })
    }

    /// Nested IK solution of the whole path at the configured step.
    pub fn path(&mut self) -> Result<&[PkmStep], Error> {
        if self.path.is_none() {
            let zero: Vec<_> = self.model.limbs.iter().map(|l| DVector::zeros(l.n_vars())).collect();
            let r = pkm_inverse_kinematics(self.model, &zero, &self.spec.samples(), &self.settings, SolverKind::Nested);
            self.path = Some(r);
        }
        match self.path.as_ref().expect("just computed") {
            Ok(s) => Ok(s),
            Err(e) => Err(e.clone()),
        }
    }

    fn random_vec(&mut self, n: usize, half_width: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.rng.random_range(-half_width..half_width))
    }

    /// Limb states at random points of the path with random task rates.
    pub fn admissible_states(&mut self) -> Result<Vec<AdmissibleState>, Error> {
        let n = self.path()?.len();
        let mut out = Vec::with_capacity(self.states);
        for _ in 0..self.states {
            let t = self.rng.random_range(0.0..self.spec.duration);
            let limb = self.rng.random_range(0..self.model.limbs.len());
            let v_t = self.random_vec(2, 2.0);
            let l = &self.model.limbs[limb];
            let k = ((t / self.spec.dt).round() as usize).min(n - 1);
            let guess = self.path()?[k].limbs[limb].theta().clone();
            let ik = solve_limb_ik(l, &guess, &self.spec.eval(t).pose, &tight(&self.settings)).map_err(|e| e.in_limb(limb))?;
            let rates = tree_rates_from_task(l, &ik.theta, &v_t, &DVector::zeros(2)).map_err(|e| e.in_limb(limb))?;
            out.push(AdmissibleState { limb, theta: ik.theta, theta_dot: rates.theta_dot });
        }
        Ok(out)
    }

    pub fn constraint_residual(&mut self) -> SuiteReport {
        let mut worst: f64 = 0.0;
        let mut checks = 0;
        for l in &self.model.limbs {
            let zero = DVector::zeros(l.n_vars());
            for c in &l.cycles {
                worst = worst.max(cut_residual(l, &c.cut, &zero).norm());
                checks += 1;
            }
        }
        SuiteReport {
            name: "constraint-residual",
            checks,
            measurements: vec![Measurement::new("max loop residual at the reference", worst, 1e-10)],
            error: None,
        }
    }

    pub fn fd_jacobian(&mut self) -> SuiteReport {
        let mut worst: f64 = 0.0;
        let mut checks = 0;
        for _ in 0..self.states {
            for l in &self.model.limbs {
                let th = self.random_vec(l.n_vars(), 1.0);
                let tk = TreeKinematics::new(l, &th);
                for b in 1..=l.graph.body_count() {
                    let fd = match body_jacobian_fd(l, &th, b, 1e-6) {
                        Ok(fd) => fd,
                        Err(e) => return SuiteReport::failed("fd-jacobian", e),
                    };
                    worst = worst.max(scaled_err(&tk.body_jacobian(l, b), &fd, 1e-9));
                    checks += 1;
                }
            }
        }
        SuiteReport {
            name: "fd-jacobian",
            checks,
            measurements: vec![Measurement::new("max relative error of body Jacobians", worst, FD_TOL)],
            error: None,
        }
    }

    pub fn fd_jacobian_rate(&mut self) -> SuiteReport {
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let mut checks = 0;
        for _ in 0..self.states {
            for l in &self.model.limbs {
                let th = self.random_vec(l.n_vars(), 1.0);
                let thd = self.random_vec(l.n_vars(), 1.0);
                let sj = system_jacobian(l, &th);
                let fd = (system_jacobian(l, &(&th + &thd * h)).j - system_jacobian(l, &(&th - &thd * h)).j) / (2.0 * h);
                let jd = pkm_core::kinematics::jacobian_dot(l, &sj, &thd);
                worst = worst.max(scaled_err(&jd, &fd, sj.j.norm() * thd.norm()));
                checks += 1;
            }
        }
        SuiteReport {
            name: "fd-jacobian-rate",
            checks,
            measurements: vec![Measurement::new("max relative error of the system Jacobian rate", worst, FD_TOL)],
            error: None,
        }
    }

    fn fd_along_states<F>(&mut self, name: &'static str, label: &str, f: F) -> SuiteReport
    where
        F: Fn(&LimbModel, &DVector<f64>, &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), Error>,
    {
        let states = match self.admissible_states() {
            Ok(s) => s,
            Err(e) => return SuiteReport::failed(name, e),
        };
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for s in &states {
            let l = &self.model.limbs[s.limb];
            let zero = DVector::zeros(l.n_vars());
            let r = (|| {
                let (m, md) = f(l, &s.theta, &s.theta_dot)?;
                let (mp, _) = f(l, &(&s.theta + &s.theta_dot * h), &zero)?;
                let (mm, _) = f(l, &(&s.theta - &s.theta_dot * h), &zero)?;
                Ok::<_, Error>(scaled_err(&md, &((mp - mm) / (2.0 * h)), m.norm() * s.theta_dot.norm()))
            })();
            match r {
                Ok(e) => worst = worst.max(e),
                Err(e) => return SuiteReport::failed(name, e.in_limb(s.limb)),
            }
        }
        SuiteReport { name, checks: states.len(), measurements: vec![Measurement::new(label, worst, FD_TOL)], error: None }
    }

    pub fn fd_complement_rate(&mut self) -> SuiteReport {
        self.fd_along_states("fd-complement-rate", "max relative error of the complement rate", |l, th, thd| {
            let s = limb_constraint_solution(l, th, thd)?;
            Ok((s.h, s.h_dot))
        })
    }

    pub fn fd_task_rate(&mut self) -> SuiteReport {
        self.fd_along_states("fd-task-rate", "max relative error of the task Jacobian rate", |l, th, thd| {
            let j = limb_jacobians(l, th, thd)?;
            Ok((j.l_t, j.l_t_dot))
        })
    }

    pub fn fd_trajectory(&mut self) -> SuiteReport {
        let name = "fd-trajectory";
        let n = match self.path() {
            Ok(p) => p.len(),
            Err(e) => return SuiteReport::failed(name, e),
        };
        let h = 1e-5;
        let settings = tight(&self.settings);
        let (mut worst_v, mut worst_a): (f64, f64) = (0.0, 0.0);
        let mut checks = 0;
        for _ in 0..self.states {
            let t = self.rng.random_range(h..self.spec.duration - h);
            let limb = self.rng.random_range(0..self.model.limbs.len());
            let l = &self.model.limbs[limb];
            let k = ((t / self.spec.dt).round() as usize).min(n - 1);
            let guess = self.path().expect("path solved above")[k].limbs[limb].theta().clone();
            let solve = |t: f64| -> Result<_, Error> {
                let smp = self.spec.eval(t);
                let ik = solve_limb_ik(l, &guess, &smp.pose, &settings)?;
                let r = tree_rates_from_task(l, &ik.theta, &smp.v_t, &smp.v_t_dot)?;
                Ok((ik.theta, r.theta_dot, r.theta_ddot))
            };
            let r = (|| {
                let (_, v, a) = solve(t)?;
                let (xp, vp, _) = solve(t + h)?;
                let (xm, vm, _) = solve(t - h)?;
                let fd_v = DMatrix::from_column_slice(v.len(), 1, ((xp - xm) / (2.0 * h)).as_slice());
                let fd_a = DMatrix::from_column_slice(a.len(), 1, ((vp - vm) / (2.0 * h)).as_slice());
                let as_m = |x: &DVector<f64>| DMatrix::from_column_slice(x.len(), 1, x.as_slice());
                Ok::<_, Error>((scaled_err(&as_m(&v), &fd_v, 1e-9), scaled_err(&as_m(&a), &fd_a, 1e-9)))
            })();
            match r {
                Ok((ev, ea)) => {
                    worst_v = worst_v.max(ev);
                    worst_a = worst_a.max(ea);
                    checks += 1;
                }
                Err(e) => return SuiteReport::failed(name, e.in_limb(limb)),
            }
        }
        SuiteReport {
            name,
            checks,
            measurements: vec![
                Measurement::new("max relative error of joint rates", worst_v, FD_TOL),
                Measurement::new("max relative error of joint accelerations", worst_a, FD_TOL),
            ],
            error: None,
        }
    }

    /// Loop residuals of every accepted step along the path.
    pub fn constraint_fidelity(&mut self) -> SuiteReport {
        let name = "constraint-fidelity";
        let path = match self.path() {
            Ok(p) => p.to_vec(),
            Err(e) => return SuiteReport::failed(name, e),
        };
        fidelity_report(name, self.model, &path)
    }

    pub fn multiplier_oracle(&mut self) -> SuiteReport {
        let name = "multiplier-oracle";
        let samples = self.spec.samples();
        let model = self.model;
        let path = match self.path() {
            Ok(p) => p,
            Err(e) => return SuiteReport::failed(name, e),
        };
        let stride = (path.len() / 25).max(1);
        let mut worst: f64 = 0.0;
        let mut checks = 0;
        for (st, smp) in path.iter().zip(&samples).step_by(stride) {
            let (u, _) = match inverse_dynamics_step(model, st, &smp.pose, &smp.v_t, &smp.v_t_dot) {
                Ok(r) => r,
                Err(e) => return SuiteReport::failed(name, e),
            };
            let l0 = &model.limbs[0];
            let tk = TreeKinematics::new(l0, st.limbs[0].theta());
            let (v, vd) = frame_motion(l0, &tk, &st.limbs[0].rates.theta_dot, &st.limbs[0].rates.theta_ddot);
            let pv = l0.platform_var();
            let states: Vec<_> = st.limbs.iter().map(|l| (l.ik.theta.clone(), l.rates.theta_dot.clone(), l.rates.theta_ddot.clone())).collect();
            let oracle = multiplier_inverse_dynamics(model, &states, &tk.poses[pv], &v[pv], &vd[pv], 1e-6);
            worst = worst.max((&u - &oracle).norm() / oracle.norm().max(1e-9));
            checks += 1;
        }
        SuiteReport {
            name,
            checks,
            measurements: vec![Measurement::new("max relative deviation from the multiplier solution", worst, 1e-6)],
            error: None,
        }
    }

    pub fn power_balance(&mut self) -> SuiteReport {
        let name = "power-balance";
        let r = match run_experiment_with(self.model, ExperimentKind::InvDyn, &self.spec, &self.settings, SolverKind::Nested) {
            Ok(r) => r,
            Err(e) => return SuiteReport::failed(name, e),
        };
        if let Some(e) = r.failure {
            return SuiteReport::failed(name, e);
        }
        let res: f64 = r.steps.iter().map(|s| s.power_residual.unwrap_or(f64::NAN).abs()).sum();
        let pow: f64 = r.steps.iter().map(|s| s.actuator_power.unwrap_or(f64::NAN).abs()).sum();
        let ratio = res / pow;
        SuiteReport {
            name,
            checks: r.steps.len(),
            measurements: vec![Measurement::new("integrated power residual relative to actuator power", if ratio.is_nan() { f64::INFINITY } else { ratio }, 1e-3)],
            error: None,
        }
    }
}

/// Per-loop position, velocity and acceleration residuals over solved steps.
pub fn fidelity_report(name: &'static str, model: &PkmModel, path: &[PkmStep]) -> SuiteReport {
    let (mut g, mut gv, mut ga): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut checks = 0;
    for st in path {
        for (l, s) in model.limbs.iter().zip(&st.limbs) {
            let sol = &s.rates.jacobians.constraints;
            for (cy, cs) in l.cycles.iter().zip(&sol.cycles) {
                let local = |x: &DVector<f64>| DVector::from_iterator(cy.n_vars(), cy.cycle.vars.iter().map(|&v| x[v]));
                g = g.max(cs.eval.g.norm());
                gv = gv.max((&cs.eval.jac * local(&s.rates.theta_dot)).norm());
                ga = ga.max((&cs.eval.jac * local(&s.rates.theta_ddot) + &cs.eval.bias).norm());
                checks += 1;
            }
        }
    }
    SuiteReport {
        name,
        checks,
        measurements: vec![
            Measurement::new("max |g|", g, 1e-10),
            Measurement::new("max |G theta_dot|", gv, 1e-9),
            Measurement::new("max acceleration residual", ga, 1e-8),
        ],
        error: None,
    }
}

/// Suites selected by name, in canonical order; all when `filter` is empty.
pub fn select(filter: &[String]) -> Result<Vec<&'static str>, CliError> {
    for f in filter {
        if !SUITES.contains(&f.as_str()) {
            return Err(CliError::Config(format!("unknown suite '{f}' (expected one of {})", SUITES.join(", "))));
        }
    }
    Ok(SUITES.iter().copied().filter(|s| filter.is_empty() || filter.iter().any(|f| f == s)).collect())
}
