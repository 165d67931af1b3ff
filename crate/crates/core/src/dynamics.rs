//! Equations of motion: tree-topology limb dynamics, projection onto the
//! limb's independent coordinates, the platform Newton-Euler equations and
//! the task-space inverse dynamics of the manipulator.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::kinematics::{frame_motion, jacobian_dot, system_jacobian, TreeKinematics};
use crate::model::{LimbModel, PkmModel};
use crate::se3::{ad, adjoint_inv, angular, linear, skew, unskew, Mat6, Pose, Vec3, Vec6};
use crate::solver::{actuation_jacobian, LimbJacobians, PkmStep};

/// Dynamics of the tree without the platform, in the coordinates
/// [`LimbModel::dynamics_vars`].
#[derive(Clone, Debug, PartialEq)]
pub struct TreeEomTerms {
    pub vars: Vec<usize>,
    /// `M̄`.
    pub mass: DMatrix<f64>,
    /// `C̄ϑ̄̇`.
    pub coriolis: DVector<f64>,
    /// `Q̄^grav`.
    pub gravity: DVector<f64>,
}

/// Gravity as a twist of inertial-frame accelerations.
fn gravity_twist(g: &Vec3) -> Vec6 {
    Vec6::new(0.0, 0.0, 0.0, g.x, g.y, g.z)
}

fn rows_cols(m: &DMatrix<f64>, rows: core::ops::Range<usize>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows.start + r, cols[c])])
}

/// Tree EOM terms `M̄ = 𝖩ᵀ𝖬𝖩`, `C̄ϑ̇ = 𝖩ᵀ(𝖬𝖩̇ϑ̇ − 𝖻)` with
/// `𝖻_k = ad_{V_k}ᵀ M_k V_k`, and `Q̄^grav = −𝖩ᵀ𝖬 Ad_{C_k}⁻¹(0; g)`.
///
/// `theta` and `theta_dot` cover all limb variables; the platform joint's
/// rows and columns are dropped.
pub fn tree_eom(limb: &LimbModel, theta: &DVector<f64>, theta_dot: &DVector<f64>, gravity: &Vec3) -> Result<TreeEomTerms, Error> {
    for v in [theta, theta_dot] {
        if v.len() != limb.n_vars() {
            return Err(Error::DimensionMismatch { expected: limb.n_vars(), found: v.len() });
        }
    }
    let vars = limb.dynamics_vars();
    let sj = system_jacobian(limb, theta);
    let jd = jacobian_dot(limb, &sj, theta_dot);
    let n = vars.len();
    let mut mass = DMatrix::zeros(n, n);
    let mut coriolis = DVector::zeros(n);
    let mut grav = DVector::zeros(n);
    let qd = DVector::from_iterator(n, vars.iter().map(|&v| theta_dot[v]));
    let g = gravity_twist(gravity);
    for (b, fv) in limb.massive_frames() {
        let m = DMatrix::from_column_slice(6, 6, limb.inertia[b].as_slice());
        let jb = rows_cols(&sj.j, 6 * fv..6 * fv + 6, &vars);
        let jdb = rows_cols(&jd, 6 * fv..6 * fv + 6, &vars);
        let v = Vec6::from_column_slice((&jb * &qd).as_slice());
        let bias = ad(&v).transpose() * limb.inertia[b] * v;
        let bias = DVector::from_column_slice(bias.as_slice());
        let jbt = jb.transpose();
        mass += &jbt * &m * &jb;
        coriolis += &jbt * (&m * (&jdb * &qd) - bias);
        let gb = adjoint_inv(&sj.poses[fv]) * g;
        grav -= &jbt * (&m * DVector::from_column_slice(gb.as_slice()));
    }
    Ok(TreeEomTerms { vars, mass, coriolis, gravity: grav })
}

/// Limb dynamics in its independent coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedEom {
    /// `M̿ = H̄ᵀM̄H̄`.
    pub mass: DMatrix<f64>,
    /// `C̿q̇ = H̄ᵀ(M̄H̄̇q̇ + C̄ϑ̄̇)`.
    pub coriolis: DVector<f64>,
    /// `Q̿^grav = H̄ᵀQ̄^grav`.
    pub gravity: DVector<f64>,
}

/// Rows of `H` belonging to the tree-dynamics variables.
pub fn h_bar(terms: &TreeEomTerms, h: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(terms.vars.len(), h.ncols(), |r, c| h[(terms.vars[r], c)])
}

pub fn limb_eom_project(
    terms: &TreeEomTerms,
    h: &DMatrix<f64>,
    h_dot: &DMatrix<f64>,
    q_dot: &DVector<f64>,
) -> Result<ProjectedEom, Error> {
    let n = terms.vars.len();
    if h.nrows() != n || h_dot.shape() != h.shape() {
        return Err(Error::DimensionMismatch { expected: n, found: h.nrows() });
    }
    if q_dot.len() != h.ncols() {
        return Err(Error::DimensionMismatch { expected: h.ncols(), found: q_dot.len() });
    }
    let ht = h.transpose();
    Ok(ProjectedEom {
        mass: &ht * &terms.mass * h,
        coriolis: &ht * (&terms.mass * (h_dot * q_dot) + &terms.coriolis),
        gravity: &ht * &terms.gravity,
    })
}

/// Platform wrench balance `M_pV̇_p + G_pM_pV_p + W_p^grav` with
/// `G_p = −ad_{V_p}ᵀ`. Twists are in the platform frame at pose `c_p`.
pub fn platform_newton_euler(m_p: &Mat6, c_p: &Pose, v_p: &Vec6, v_p_dot: &Vec6, gravity: &Vec3) -> Vec6 {
    m_p * v_p_dot + gyroscopic(m_p, v_p) + platform_gravity(m_p, c_p, gravity)
}

/// `G_pM_pV_p`.
pub fn gyroscopic(m: &Mat6, v: &Vec6) -> Vec6 {
    -(ad(v).transpose() * (m * v))
}

/// `W_p^grav = −M_p Ad_{C_p}⁻¹(0; g)`.
pub fn platform_gravity(m_p: &Mat6, c_p: &Pose, gravity: &Vec3) -> Vec6 {
    -(m_p * (adjoint_inv(c_p) * gravity_twist(gravity)))
}

/// Kinematic state of one limb needed by the task-space assembly.
#[derive(Clone, Copy, Debug)]
pub struct LimbDynState<'a> {
    pub theta: &'a DVector<f64>,
    pub theta_dot: &'a DVector<f64>,
    /// Jacobians evaluated with the rates `theta_dot`.
    pub jacobians: &'a LimbJacobians,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskEomTerms {
    pub mass: DMatrix<f64>,
    /// `C_tV_t`.
    pub coriolis: DVector<f64>,
    pub gravity: DVector<f64>,
    /// Remaining generalized forces mapped to task space.
    pub applied: DVector<f64>,
    /// End-effector wrench mapped to task space.
    pub end_effector: DVector<f64>,
    pub j_ik: DMatrix<f64>,
}

/// Task-space EOM of the manipulator at platform pose `c_p` and task
/// velocity `v_t`.
pub fn task_space_eom(pkm: &PkmModel, limbs: &[LimbDynState<'_>], c_p: &Pose, v_t: &DVector<f64>) -> Result<TaskEomTerms, Error> {
    if limbs.len() != pkm.limbs.len() {
        return Err(Error::DimensionMismatch { expected: pkm.limbs.len(), found: limbs.len() });
    }
    let d = pkm.task_dof();
    if v_t.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: v_t.len() });
    }
    let pp = &pkm.p_p;
    let mp = DMatrix::from_column_slice(6, 6, pkm.platform_inertia.as_slice());
    let mut mass = pp.transpose() * &mp * pp;
    let vp = Vec6::from_column_slice((pp * v_t).as_slice());
    let gyro = gyroscopic(&pkm.platform_inertia, &vp);
    let mut coriolis = pp.transpose() * DVector::from_column_slice(gyro.as_slice());
    let wg = platform_gravity(&pkm.platform_inertia, c_p, &pkm.gravity);
    let mut gravity = pp.transpose() * DVector::from_column_slice(wg.as_slice());

    for (l, (limb, st)) in pkm.limbs.iter().zip(limbs).enumerate() {
        let tree = tree_eom(limb, st.theta, st.theta_dot, &pkm.gravity).map_err(|e| e.in_limb(l))?;
        let j = st.jacobians;
        let hb = h_bar(&tree, &j.h);
        let hbd = h_bar(&tree, &j.h_dot);
        let q_dot = &j.f * v_t;
        let proj = limb_eom_project(&tree, &hb, &hbd, &q_dot)?;
        let ft = j.f.transpose();
        mass += &ft * &proj.mass * &j.f;
        coriolis += &ft * (&proj.coriolis + &proj.mass * (&j.f_dot * v_t));
        gravity += &ft * &proj.gravity;
    }
    let fs: Vec<&DMatrix<f64>> = limbs.iter().map(|s| &s.jacobians.f).collect();
    let j_ik = actuation_jacobian(pkm, &fs);
    Ok(TaskEomTerms { mass, coriolis, gravity, applied: DVector::zeros(d), end_effector: DVector::zeros(d), j_ik })
}

/// Actuator forces `u = J_IK⁻ᵀ(M_tV̇_t + C_tV_t + W_grav + W − W_EE)`.
pub fn inverse_dynamics(terms: &TaskEomTerms, v_t_dot: &DVector<f64>) -> Result<DVector<f64>, Error> {
    let s = terms.j_ik.singular_values();
    let rcond = if s.max() > 0.0 { s.min() / s.max() } else { 0.0 };
    if rcond.is_nan() || rcond < 1e-12 {
        return Err(Error::SingularActuationJacobian { rcond });
    }
    let rhs = &terms.mass * v_t_dot + &terms.coriolis + &terms.gravity + &terms.applied - &terms.end_effector;
    let jt = terms.j_ik.transpose();
    jt.lu().solve(&rhs).ok_or(Error::SingularActuationJacobian { rcond })
}

/// Task-space terms and actuator forces of one solved trajectory sample.
pub fn inverse_dynamics_step(pkm: &PkmModel, step: &PkmStep, c_p: &Pose, v_t: &DVector<f64>, v_t_dot: &DVector<f64>) -> Result<(DVector<f64>, TaskEomTerms), Error> {
    let states: Vec<LimbDynState<'_>> = step
        .limbs
        .iter()
        .map(|s| LimbDynState { theta: &s.ik.theta, theta_dot: &s.rates.theta_dot, jacobians: &s.rates.jacobians })
        .collect();
    let terms = task_space_eom(pkm, &states, c_p, v_t)?;
    let u = inverse_dynamics(&terms, v_t_dot)?;
    Ok((u, terms))
}

/// Center-of-mass offset `c` and mass of a body-frame mass matrix.
pub fn mass_center(m: &Mat6) -> (f64, Vec3) {
    let mass = m[(3, 3)];
    if mass == 0.0 {
        return (0.0, Vec3::zeros());
    }
    let lower_left = m.fixed_view::<3, 3>(3, 0).into_owned();
    (mass, -unskew(&lower_left) / mass)
}

/// Kinetic energy, its rate and the potential-energy rate of one body.
fn body_energy(m: &Mat6, pose: &Pose, v: &Vec6, vd: &Vec6, gravity: &Vec3) -> (f64, f64, f64, f64) {
    let (mass, c) = mass_center(m);
    let t = 0.5 * v.dot(&(m * v));
    let t_dot = v.dot(&(m * vd));
    let com = pose.transform_point(&c);
    let com_vel = pose.rotation * (linear(v) - skew(&c) * angular(v));
    (t, t_dot, -mass * gravity.dot(&com), -mass * gravity.dot(&com_vel))
}

/// Mechanical energy of the manipulator and its exact time derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Energy {
    pub kinetic: f64,
    pub kinetic_rate: f64,
    pub potential: f64,
    pub potential_rate: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }

    pub fn total_rate(&self) -> f64 {
        self.kinetic_rate + self.potential_rate
    }

    fn add(&mut self, e: (f64, f64, f64, f64)) {
        self.kinetic += e.0;
        self.kinetic_rate += e.1;
        self.potential += e.2;
        self.potential_rate += e.3;
    }
}

/// Energy of every massive limb body plus the platform, from tree states and
/// the platform's body twist and acceleration.
pub fn system_energy(
    pkm: &PkmModel,
    states: &[(&DVector<f64>, &DVector<f64>, &DVector<f64>)],
    c_p: &Pose,
    v_p: &Vec6,
    v_p_dot: &Vec6,
) -> Energy {
    let mut e = Energy::default();
    for (limb, (th, thd, thdd)) in pkm.limbs.iter().zip(states) {
        let tk = TreeKinematics::new(limb, th);
        let (v, vd) = frame_motion(limb, &tk, thd, thdd);
        for (b, fv) in limb.massive_frames() {
            e.add(body_energy(&limb.inertia[b], &tk.poses[fv], &v[fv], &vd[fv], &pkm.gravity));
        }
    }
    e.add(body_energy(&pkm.platform_inertia, c_p, v_p, v_p_dot, &pkm.gravity));
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::revolute_screw;
    use crate::topology::{build_limb_graph, JointDef, JointKind};
    use alloc::vec;

    /// Point mass `m` at distance `l` below a revolute joint about y, with a
    /// massless leaf playing the platform.
    fn pendulum(m: f64, l: f64) -> LimbModel {
        let g = build_limb_graph(
            2,
            &[JointDef::new(1, JointKind::Revolute, 0, 1), JointDef::new(2, JointKind::Revolute, 1, 2)],
            &[],
        )
        .unwrap();
        let a1 = Pose::from_translation(Vec3::new(0.0, 0.0, -l));
        let limb = LimbModel::new(
            g,
            &[vec![revolute_screw(&Vec3::y(), &Vec3::zeros())], vec![revolute_screw(&Vec3::y(), &Vec3::new(0.0, 0.0, -l))]],
            vec![Pose::identity(), a1, a1],
            vec![],
            2,
            DMatrix::identity(6, 6).rows(0, 2).into_owned(),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let mut mm = Mat6::zeros();
        mm.fixed_view_mut::<3, 3>(3, 3).copy_from(&(nalgebra::Matrix3::identity() * m));
        limb.with_inertia(vec![Mat6::zeros(), mm, Mat6::zeros()]).unwrap()
    }

    #[test]
    fn pendulum_matches_analytic() {
        let (m, l, g0) = (1.3, 0.7, 9.81);
        let limb = pendulum(m, l);
        for th in [0.0, 0.4, -1.1, 2.5] {
            let theta = DVector::from_vec(vec![th, 0.0]);
            let t = tree_eom(&limb, &theta, &DVector::from_vec(vec![1.7, 0.0]), &Vec3::new(0.0, 0.0, -g0)).unwrap();
            assert_eq!(t.vars, vec![0]);
            assert!((t.mass[(0, 0)] - m * l * l).abs() < 1e-12);
            assert!(t.coriolis[0].abs() < 1e-12);
            // Rotation about +y moves the bob towards −x: restoring torque m g l sin θ.
            assert!((t.gravity[0] - m * g0 * l * th.sin()).abs() < 1e-12, "{} {}", t.gravity[0], m * g0 * l * th.sin());
        }
    }

    #[test]
    fn gyroscopic_power_vanishes() {
        let m = Mat6::from_fn(|r, c| if r == c { 1.0 + r as f64 } else { 0.0 });
        let v = Vec6::new(0.3, -1.2, 0.7, 2.0, 0.1, -0.4);
        assert!(v.dot(&gyroscopic(&m, &v)).abs() < 1e-14);
    }
}
