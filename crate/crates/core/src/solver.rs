//! Newton-Raphson solvers for loop closure and limb inverse kinematics,
//! limb Jacobians and tree-joint rates from task-space motion.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::constraints::{limb_constraint_solution_at, cycle_constraints, DependentBlock, LimbConstraintSolution};
use crate::error::Error;
use crate::kinematics::TreeKinematics;
use crate::model::{Closure, LimbModel, PkmModel};
use crate::se3::{first_order_increment, twist_norm, MetricWeights, Pose, Vec6};

/// Reciprocal condition number below which `L_t` counts as singular.
pub const TASK_RCOND_MIN: f64 = 1e-12;

/// Initial guess for each sample of a trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WarmStart {
    /// The previous sample's solution.
    Previous,
    /// The previous solution advanced by its tree-joint rates, `ϑ + ϑ̇Δt`.
    #[default]
    Extrapolate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkSettings {
    /// Threshold of the nested scheme and of loop closure.
    pub epsilon: f64,
    /// Task-space threshold of the compound scheme.
    pub epsilon1: f64,
    /// Constraint threshold of the compound scheme.
    pub epsilon2: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub metric: MetricWeights,
    pub warm_start: WarmStart,
}

impl Default for IkSettings {
    fn default() -> Self {
        Self {
            epsilon: 1e-10,
            epsilon1: 1e-10,
            epsilon2: 1e-10,
            max_outer: 50,
            max_inner: 50,
            metric: MetricWeights::default(),
            warm_start: WarmStart::default(),
        }
    }
}

impl IkSettings {
    pub fn validate(&self) -> Result<(), Error> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !(pos(self.epsilon) && pos(self.epsilon1) && pos(self.epsilon2)) {
            return Err(Error::InvalidInput("solver thresholds must be positive"));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidInput("iteration caps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IkResult {
    pub theta: DVector<f64>,
    pub outer_iterations: usize,
    /// Loop-closure iterations of every loop, per outer iteration. Loops with
    /// an explicit closure always report 0.
    pub inner_iterations: Vec<Vec<usize>>,
    /// Task error `‖Δx_t‖` before each outer iteration and at exit.
    pub error_history: Vec<f64>,
    pub error_x: f64,
    /// Largest loop residual norm at exit.
    pub error_g: f64,
}

impl IkResult {
    /// Largest loop iteration count over loops, per outer iteration.
    pub fn inner_max(&self) -> Vec<usize> {
        self.inner_iterations.iter().map(|v| v.iter().copied().max().unwrap_or(0)).collect()
    }

    pub fn inner_total(&self) -> usize {
        self.inner_iterations.iter().flatten().sum()
    }
}

fn check_len(limb: &LimbModel, theta: &DVector<f64>) -> Result<(), Error> {
    if theta.len() != limb.n_vars() {
        return Err(Error::DimensionMismatch { expected: limb.n_vars(), found: theta.len() });
    }
    Ok(())
}

/// Loop closure by Newton-Raphson: a predictor along the loop's tangent for
/// the change `dq` of its independent coordinates, then corrections
/// `Δy = −G_y⁻¹g` until `‖g‖ ≤ ε`. Returns the new limb configuration and the
/// number of iterations (the predictor counts as one when `dq ≠ 0`).
pub fn solve_loop_constraints(
    limb: &LimbModel,
    index: usize,
    theta0: &DVector<f64>,
    dq: &DVector<f64>,
    settings: &IkSettings,
) -> Result<(DVector<f64>, usize), Error> {
    check_len(limb, theta0)?;
    let cycle = limb.cycles.get(index).ok_or(Error::InvalidInput("no such loop"))?;
    if dq.len() != cycle.dof() {
        return Err(Error::DimensionMismatch { expected: cycle.dof(), found: dq.len() });
    }
    let vars = &cycle.cycle.vars;
    let mut theta = theta0.clone();

    if let Closure::Explicit(h) = &cycle.closure {
        let d = h * dq;
        for (r, &v) in vars.iter().enumerate() {
            theta[v] += d[r];
        }
        return Ok((theta, 0));
    }

    let zero = DVector::zeros(limb.n_vars());
    let dep = cycle.dependent_vars();
    let mut iters = 0;
    let err = |e: Error| e.in_cycle(index);

    if dq.iter().any(|x| *x != 0.0) {
        let tk = TreeKinematics::new(limb, &theta);
        let eval = cycle_constraints(limb, &tk, cycle, &zero);
        let blk = DependentBlock::new(cycle, &eval.jac).map_err(err)?;
        let gq = DMatrix::from_fn(eval.jac.nrows(), dq.len(), |r, c| eval.jac[(r, cycle.partition.independent[c])]);
        let dy = blk.solve_neg(&(gq * dq));
        for (i, &v) in dep.iter().enumerate() {
            theta[v] += dy[i];
        }
        for (i, v) in cycle.independent_vars().into_iter().enumerate() {
            theta[v] += dq[i];
        }
        iters = 1;
    }

    let mut best = (f64::INFINITY, theta.clone());
    loop {
        let tk = TreeKinematics::new(limb, &theta);
        let eval = cycle_constraints(limb, &tk, cycle, &zero);
        let e = eval.g.norm();
        if e < best.0 {
            best = (e, theta.clone());
        }
        if e <= settings.epsilon {
            return Ok((theta, iters));
        }
        if iters >= settings.max_inner || !e.is_finite() {
            return Err(err(Error::MaxIterationsExceeded { iterations: iters, error: best.0, best: best.1 }));
        }
        let blk = DependentBlock::new(cycle, &eval.jac).map_err(err)?;
        let dy = blk.solve_neg(&eval.g);
        for (i, &v) in dep.iter().enumerate() {
            theta[v] += dy[i];
        }
        iters += 1;
    }
}

/// Task-space increment `P_t (ΔC − I)ᵛ` from the current platform pose to the
/// target, expressed in the current platform frame.
pub fn task_increment(limb: &LimbModel, current: &Pose, target: &Pose) -> DVector<f64> {
    let inc = first_order_increment(&(current.inverse() * *target));
    &limb.p_t * DVector::from_column_slice(inc.as_slice())
}

fn task_error(limb: &LimbModel, dx: &DVector<f64>, w: &MetricWeights) -> f64 {
    let full = limb.p_t.transpose() * dx;
    twist_norm(&Vec6::from_column_slice(full.as_slice()), w)
}

fn inverse_checked(m: &DMatrix<f64>) -> Result<DMatrix<f64>, Error> {
    let s = m.singular_values();
    let rcond = if s.max() > 0.0 { s.min() / s.max() } else { 0.0 };
    if rcond.is_nan() || rcond < TASK_RCOND_MIN {
        return Err(Error::SingularTaskJacobian { rcond });
    }
    m.clone().try_inverse().ok_or(Error::SingularTaskJacobian { rcond })
}

/// `L_t = P_t J_p H` and its inverse at a configuration.
fn task_jacobian(limb: &LimbModel, tk: &TreeKinematics, sol: &LimbConstraintSolution) -> DMatrix<f64> {
    let jp = tk.frame_jacobian(limb, Some(limb.platform_var()));
    &limb.p_t * jp * &sol.h
}

/// Adds `dq` (ordered as [`LimbModel::q_vars`]) to the free variables and
/// closes every loop. Returns the per-loop iteration counts.
fn apply_q_step(
    limb: &LimbModel,
    theta: &mut DVector<f64>,
    dq: &DVector<f64>,
    settings: &IkSettings,
) -> Result<Vec<usize>, Error> {
    let q = limb.q_vars();
    for (i, &v) in q.iter().enumerate() {
        if limb.graph.free_vars().contains(&v) {
            theta[v] += dq[i];
        }
    }
    let mut counts = Vec::with_capacity(limb.cycles.len());
    for (ci, cy) in limb.cycles.iter().enumerate() {
        let dql = DVector::from_iterator(
            cy.dof(),
            cy.independent_vars().iter().map(|iv| dq[q.iter().position(|x| x == iv).expect("coordinate")]),
        );
        let (t, n) = solve_loop_constraints(limb, ci, theta, &dql, settings)?;
        *theta = t;
        counts.push(n);
    }
    Ok(counts)
}

fn max_residual(limb: &LimbModel, tk: &TreeKinematics) -> f64 {
    let zero = DVector::zeros(limb.n_vars());
    limb.cycles.iter().map(|c| cycle_constraints(limb, tk, c, &zero).g.norm()).fold(0.0, f64::max)
}

/// Nested Newton-Raphson limb inverse kinematics: each outer step maps the
/// task error to independent coordinates through `L_t⁻¹` and restores loop
/// closure before re-evaluating the platform pose.
pub fn solve_limb_ik(limb: &LimbModel, theta0: &DVector<f64>, target: &Pose, settings: &IkSettings) -> Result<IkResult, Error> {
    check_len(limb, theta0)?;
    settings.validate()?;
    let zero = DVector::zeros(limb.n_vars());
    let mut theta = theta0.clone();
    let mut tk = TreeKinematics::new(limb, &theta);
    let mut dx = task_increment(limb, &tk.body_pose(limb, limb.platform), target);
    let mut e = task_error(limb, &dx, &settings.metric);
    let mut history = vec![e];
    let mut inner = Vec::new();
    let mut best = (e, theta.clone());
    while e > settings.epsilon {
        if inner.len() >= settings.max_outer || !e.is_finite() {
            return Err(Error::MaxIterationsExceeded { iterations: inner.len(), error: best.0, best: best.1 });
        }
        let sol = limb_constraint_solution_at(limb, &tk, &zero)?;
        let lt_inv = inverse_checked(&task_jacobian(limb, &tk, &sol))?;
        let dq = lt_inv * &dx;
        inner.push(apply_q_step(limb, &mut theta, &dq, settings)?);
        tk = TreeKinematics::new(limb, &theta);
        dx = task_increment(limb, &tk.body_pose(limb, limb.platform), target);
        e = task_error(limb, &dx, &settings.metric);
        history.push(e);
        if e < best.0 {
            best = (e, theta.clone());
        }
    }
    let error_g = max_residual(limb, &tk);
    Ok(IkResult { theta, outer_iterations: inner.len(), inner_iterations: inner, error_history: history, error_x: e, error_g })
}

/// Compound scheme: one combined Newton step on task error and loop
/// residuals per iteration.
pub fn solve_limb_ik_compound(
    limb: &LimbModel,
    theta0: &DVector<f64>,
    target: &Pose,
    settings: &IkSettings,
) -> Result<IkResult, Error> {
    check_len(limb, theta0)?;
    settings.validate()?;
    let zero = DVector::zeros(limb.n_vars());
    let mut theta = theta0.clone();
    let mut history = Vec::new();
    let mut inner = Vec::new();
    let mut best = (f64::INFINITY, theta.clone());
    loop {
        let tk = TreeKinematics::new(limb, &theta);
        let dx = task_increment(limb, &tk.body_pose(limb, limb.platform), target);
        let ex = task_error(limb, &dx, &settings.metric);
        let sol = limb_constraint_solution_at(limb, &tk, &zero)?;
        let eg = sol.cycles.iter().map(|c| c.eval.g.norm()).fold(0.0, f64::max);
        history.push(ex);
        if ex.max(eg) < best.0 {
            best = (ex.max(eg), theta.clone());
        }
        if ex <= settings.epsilon1 && eg <= settings.epsilon2 {
            return Ok(IkResult {
                theta,
                outer_iterations: inner.len(),
                inner_iterations: inner,
                error_history: history,
                error_x: ex,
                error_g: eg,
            });
        }
        if inner.len() >= settings.max_outer || !ex.is_finite() || !eg.is_finite() {
            return Err(Error::MaxIterationsExceeded { iterations: inner.len(), error: best.0, best: best.1 });
        }
        let lt_inv = inverse_checked(&task_jacobian(limb, &tk, &sol))?;
        let mut step = &sol.h * (lt_inv * dx);
        for (ci, (cy, cs)) in limb.cycles.iter().zip(&sol.cycles).enumerate() {
            if matches!(cy.closure, Closure::Explicit(_)) {
                continue;
            }
            let blk = DependentBlock::new(cy, &cs.eval.jac).map_err(|e| e.in_cycle(ci))?;
            let dy = blk.solve_neg(&cs.eval.g);
            for (i, v) in cy.dependent_vars().into_iter().enumerate() {
                step[v] += dy[i];
            }
        }
        theta += step;
        inner.push(vec![0; limb.cycles.len()]);
    }
}

/// Velocity-level limb Jacobians at a configuration and rate.
#[derive(Clone, Debug)]
pub struct LimbJacobians {
    pub h: DMatrix<f64>,
    pub h_dot: DMatrix<f64>,
    /// `L_p = J_p H`, 6×δ_l.
    pub l_p: DMatrix<f64>,
    pub l_p_dot: DMatrix<f64>,
    /// `L_t = P_t L_p`.
    pub l_t: DMatrix<f64>,
    pub l_t_dot: DMatrix<f64>,
    /// `F = L_t⁻¹ D_t`.
    pub f: DMatrix<f64>,
    /// `Ḟ = −L_t⁻¹ L̇_t F`.
    pub f_dot: DMatrix<f64>,
    pub lt_inv: DMatrix<f64>,
    pub constraints: LimbConstraintSolution,
}

/// Limb Jacobians at `theta`; the derivatives use the tree rates `theta_dot`
/// (zero rates give the configuration-only quantities).
pub fn limb_jacobians(limb: &LimbModel, theta: &DVector<f64>, theta_dot: &DVector<f64>) -> Result<LimbJacobians, Error> {
    check_len(limb, theta)?;
    check_len(limb, theta_dot)?;
    let tk = TreeKinematics::new(limb, theta);
    limb_jacobians_at(limb, &tk, theta_dot)
}

fn limb_jacobians_at(limb: &LimbModel, tk: &TreeKinematics, theta_dot: &DVector<f64>) -> Result<LimbJacobians, Error> {
    let sol = limb_constraint_solution_at(limb, tk, theta_dot)?;
    let pv = Some(limb.platform_var());
    let jp = tk.frame_jacobian(limb, pv);
    let jpd = tk.frame_jacobian_dot(limb, pv, theta_dot);
    let l_p = &jp * &sol.h;
    let l_p_dot = &jpd * &sol.h + &jp * &sol.h_dot;
    let l_t = &limb.p_t * &l_p;
    let l_t_dot = &limb.p_t * &l_p_dot;
    let lt_inv = inverse_checked(&l_t)?;
    let f = &lt_inv * &limb.d_t;
    let f_dot = -(&lt_inv * &l_t_dot * &f);
    Ok(LimbJacobians { h: sol.h.clone(), h_dot: sol.h_dot.clone(), l_p, l_p_dot, l_t, l_t_dot, f, f_dot, lt_inv, constraints: sol })
}

/// Tree-joint rates of a limb driven by task velocity and acceleration.
#[derive(Clone, Debug)]
pub struct LimbRates {
    pub q_dot: DVector<f64>,
    pub q_ddot: DVector<f64>,
    pub theta_dot: DVector<f64>,
    pub theta_ddot: DVector<f64>,
    pub jacobians: LimbJacobians,
}

/// `ϑ̇ = H F V_t` and `ϑ̈ = H F V̇_t + (Ḣ − H L_t⁻¹ L̇_t) q̇`.
pub fn tree_rates_from_task(
    limb: &LimbModel,
    theta: &DVector<f64>,
    v_t: &DVector<f64>,
    v_t_dot: &DVector<f64>,
) -> Result<LimbRates, Error> {
    check_len(limb, theta)?;
    let tk = TreeKinematics::new(limb, theta);
    tree_rates_at(limb, &tk, v_t, v_t_dot)
}

fn tree_rates_at(limb: &LimbModel, tk: &TreeKinematics, v_t: &DVector<f64>, v_t_dot: &DVector<f64>) -> Result<LimbRates, Error> {
    if v_t.len() != limb.d_t.ncols() || v_t_dot.len() != limb.d_t.ncols() {
        return Err(Error::DimensionMismatch { expected: limb.d_t.ncols(), found: v_t.len() });
    }
    let j0 = limb_jacobians_at(limb, tk, &DVector::zeros(limb.n_vars()))?;
    let q_dot = &j0.f * v_t;
    let theta_dot = &j0.h * &q_dot;
    let j = limb_jacobians_at(limb, tk, &theta_dot)?;
    let q_ddot = &j.f * v_t_dot - &j.lt_inv * (&j.l_t_dot * &q_dot);
    let theta_ddot = &j.h * &q_ddot + &j.h_dot * &q_dot;
    Ok(LimbRates { q_dot, q_ddot, theta_dot, theta_ddot, jacobians: j })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Nested,
    Compound,
}

/// One platform sample: pose, task velocity and task acceleration.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSample {
    pub t: f64,
    pub pose: Pose,
    pub v_t: DVector<f64>,
    pub v_t_dot: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct LimbStep {
    pub ik: IkResult,
    pub rates: LimbRates,
}

impl LimbStep {
    pub fn theta(&self) -> &DVector<f64> {
        &self.ik.theta
    }
}

#[derive(Clone, Debug)]
pub struct PkmStep {
    pub t: f64,
    pub limbs: Vec<LimbStep>,
    /// Actuator rows of the limbs' `F`, n_act×δ_p.
    pub j_ik: DMatrix<f64>,
}

/// Actuator rows of every limb's `F`, stacked.
pub fn actuation_jacobian(pkm: &PkmModel, fs: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = pkm.actuators.iter().map(|a| a.len()).sum();
    let mut j = DMatrix::zeros(n, pkm.task_dof());
    let mut row = 0;
    for ((limb, acts), f) in pkm.limbs.iter().zip(&pkm.actuators).zip(fs) {
        for a in acts {
            let qi = limb.q_vars().iter().position(|x| x == a).expect("actuator is a coordinate");
            j.row_mut(row).copy_from(&f.row(qi));
            row += 1;
        }
    }
    j
}

/// Solves one trajectory sample for every limb, warm-started from `theta0`.
pub fn pkm_step(
    pkm: &PkmModel,
    theta0: &[DVector<f64>],
    sample: &TaskSample,
    settings: &IkSettings,
    kind: SolverKind,
) -> Result<PkmStep, Error> {
    if theta0.len() != pkm.limbs.len() {
        return Err(Error::DimensionMismatch { expected: pkm.limbs.len(), found: theta0.len() });
    }
    let mut limbs = Vec::with_capacity(pkm.limbs.len());
    for (l, (limb, th)) in pkm.limbs.iter().zip(theta0).enumerate() {
        let ik = match kind {
            SolverKind::Nested => solve_limb_ik(limb, th, &sample.pose, settings),
            SolverKind::Compound => solve_limb_ik_compound(limb, th, &sample.pose, settings),
        }
        .map_err(|e| e.in_limb(l))?;
        let rates = tree_rates_from_task(limb, &ik.theta, &sample.v_t, &sample.v_t_dot).map_err(|e| e.in_limb(l))?;
        limbs.push(LimbStep { ik, rates });
    }
    let fs: Vec<&DMatrix<f64>> = limbs.iter().map(|s| &s.rates.jacobians.f).collect();
    let j_ik = actuation_jacobian(pkm, &fs);
    Ok(PkmStep { t: sample.t, limbs, j_ik })
}

/// Initial guesses for the sample at time `t` given the step solved before it.
pub fn warm_start_guess(prev: &PkmStep, t: f64, mode: WarmStart) -> Vec<DVector<f64>> {
    let dt = t - prev.t;
    prev.limbs
        .iter()
        .map(|l| match mode {
            WarmStart::Previous => l.ik.theta.clone(),
            WarmStart::Extrapolate => &l.ik.theta + &l.rates.theta_dot * dt,
        })
        .collect()
}

/// Trajectory inverse kinematics: every sample is warm-started from the
/// previous one. Errors carry the limb and sample index.
pub fn pkm_inverse_kinematics(
    pkm: &PkmModel,
    theta0: &[DVector<f64>],
    samples: &[TaskSample],
    settings: &IkSettings,
    kind: SolverKind,
) -> Result<Vec<PkmStep>, Error> {
    let mut out: Vec<PkmStep> = Vec::with_capacity(samples.len());
    for (k, s) in samples.iter().enumerate() {
        let guess = match out.last() {
            Some(prev) => warm_start_guess(prev, s.t, settings.warm_start),
            None => theta0.to_vec(),
        };
        let step = pkm_step(pkm, &guess, s, settings, kind).map_err(|e| e.at_step(k))?;
        out.push(step);
    }
    Ok(out)
}
