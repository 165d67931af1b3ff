//! Tree kinematics by the product of exponentials, the system Jacobian
//! `𝖩 = 𝖠𝖷` of body-fixed twists and its time derivative.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::model::LimbModel;
use crate::se3::{ad, adjoint, adjoint_inv, exp_se3, Mat6, Pose, Vec6};

/// Frame poses and current inertial-frame joint screws of one tree state.
#[derive(Clone, Debug)]
pub struct TreeKinematics {
    /// Pose `C_i` of the frame moved by each variable.
    pub poses: Vec<Pose>,
    /// Joint screws `Ad_{C_i} X_i` in the inertial frame.
    pub spatial: Vec<Vec6>,
}

impl TreeKinematics {
    pub fn new(limb: &LimbModel, theta: &DVector<f64>) -> Self {
        let n = limb.n_vars();
        assert_eq!(theta.len(), n, "configuration length");
        let mut f: Vec<Pose> = Vec::with_capacity(n);
        let mut poses = Vec::with_capacity(n);
        let mut spatial = Vec::with_capacity(n);
        for i in 0..n {
            let fr = &limb.frames[i];
            let parent = limb.graph.var_parent(i).map(|p| f[p]).unwrap_or_default();
            spatial.push(adjoint(&parent) * fr.y);
            let fi = parent * exp_se3(&fr.y, theta[i]);
            poses.push(fi * fr.a);
            f.push(fi);
        }
        Self { poses, spatial }
    }

    pub fn body_pose(&self, limb: &LimbModel, body: usize) -> Pose {
        limb.graph.body_var(body).map(|v| self.poses[v]).unwrap_or_default()
    }

    /// Rows of `𝖩` belonging to frame `var` (6×n); zero for `var = None`.
    pub fn frame_jacobian(&self, limb: &LimbModel, var: Option<usize>) -> DMatrix<f64> {
        let n = limb.n_vars();
        let mut j = DMatrix::zeros(6, n);
        let Some(i) = var else { return j };
        let adi = adjoint_inv(&self.poses[i]);
        let mut cur = Some(i);
        while let Some(c) = cur {
            j.fixed_view_mut::<6, 1>(0, c).copy_from(&(adi * self.spatial[c]));
            cur = limb.graph.var_parent(c);
        }
        j
    }

    pub fn body_jacobian(&self, limb: &LimbModel, body: usize) -> DMatrix<f64> {
        self.frame_jacobian(limb, limb.graph.body_var(body))
    }

    /// Time derivative of [`Self::frame_jacobian`] for the rates `theta_dot`.
    ///
    /// Column `j` is `−Ad_{C_i}⁻¹ [W, S_j]` where `W` is the sum of the
    /// screws `ϑ̇_k S_k` on the path strictly after `j` up to `i`.
    pub fn frame_jacobian_dot(&self, limb: &LimbModel, var: Option<usize>, theta_dot: &DVector<f64>) -> DMatrix<f64> {
        let n = limb.n_vars();
        let mut jd = DMatrix::zeros(6, n);
        let Some(i) = var else { return jd };
        let adi = adjoint_inv(&self.poses[i]);
        let mut w = Vec6::zeros();
        let mut cur = Some(i);
        while let Some(c) = cur {
            jd.fixed_view_mut::<6, 1>(0, c).copy_from(&(-(adi * (ad(&w) * self.spatial[c]))));
            w += self.spatial[c] * theta_dot[c];
            cur = limb.graph.var_parent(c);
        }
        jd
    }

    pub fn body_jacobian_dot(&self, limb: &LimbModel, body: usize, theta_dot: &DVector<f64>) -> DMatrix<f64> {
        self.frame_jacobian_dot(limb, limb.graph.body_var(body), theta_dot)
    }
}

pub fn body_pose(limb: &LimbModel, theta: &DVector<f64>, body: usize) -> Result<Pose, Error> {
    if body > limb.graph.body_count() {
        return Err(Error::UnknownBody(body));
    }
    check_len(limb, theta)?;
    let mut pose = limb.body_ref[body];
    for &v in limb.graph.predecessor_vars(body).iter().rev() {
        pose = exp_se3(&limb.frames[v].y, theta[v]) * pose;
    }
    Ok(pose)
}

/// Poses of the ground (index 0) and every body, each joint exponential
/// evaluated once.
pub fn all_poses(limb: &LimbModel, theta: &DVector<f64>) -> Result<Vec<Pose>, Error> {
    check_len(limb, theta)?;
    let tk = TreeKinematics::new(limb, theta);
    Ok((0..=limb.graph.body_count()).map(|b| tk.body_pose(limb, b)).collect())
}

pub fn platform_pose(limb: &LimbModel, theta: &DVector<f64>) -> Pose {
    TreeKinematics::new(limb, theta).body_pose(limb, limb.platform)
}

fn check_len(limb: &LimbModel, theta: &DVector<f64>) -> Result<(), Error> {
    if theta.len() != limb.n_vars() {
        return Err(Error::DimensionMismatch { expected: limb.n_vars(), found: theta.len() });
    }
    Ok(())
}

/// Dense system Jacobian with its factors.
#[derive(Clone, Debug)]
pub struct SystemJacobian {
    /// `𝖩`, 6n×n.
    pub j: DMatrix<f64>,
    /// `𝖠`, 6n×6n, block lower triangular.
    pub a: DMatrix<f64>,
    /// `𝖷`, 6n×n, block diagonal.
    pub x: DMatrix<f64>,
    pub poses: Vec<Pose>,
}

impl SystemJacobian {
    /// Block row of frame `var`.
    pub fn rows(&self, var: usize) -> DMatrix<f64> {
        self.j.rows(6 * var, 6).into_owned()
    }
}

pub fn system_jacobian(limb: &LimbModel, theta: &DVector<f64>) -> SystemJacobian {
    let n = limb.n_vars();
    let tk = TreeKinematics::new(limb, theta);
    let mut a = DMatrix::zeros(6 * n, 6 * n);
    let mut x = DMatrix::zeros(6 * n, n);
    for i in 0..n {
        x.fixed_view_mut::<6, 1>(6 * i, i).copy_from(&limb.frames[i].x);
        let adi = adjoint_inv(&tk.poses[i]);
        let mut cur = Some(i);
        while let Some(c) = cur {
            let blk: Mat6 = adi * adjoint(&tk.poses[c]);
            a.fixed_view_mut::<6, 6>(6 * i, 6 * c).copy_from(&blk);
            cur = limb.graph.var_parent(c);
        }
    }
    let j = &a * &x;
    SystemJacobian { j, a, x, poses: tk.poses }
}

/// `𝖩̇ = −𝖠 𝖺 𝖩` with `𝖺 = diag(ϑ̇_i ad_{X_i})`.
pub fn jacobian_dot(limb: &LimbModel, sj: &SystemJacobian, theta_dot: &DVector<f64>) -> DMatrix<f64> {
    let n = limb.n_vars();
    let mut aj = DMatrix::zeros(6 * n, n);
    for i in 0..n {
        let blk = ad(&limb.frames[i].x) * theta_dot[i];
        let rows = blk * sj.j.rows(6 * i, 6);
        aj.rows_mut(6 * i, 6).copy_from(&rows);
    }
    -(&sj.a * aj)
}

/// Stacked body twists `𝖵 = 𝖩ϑ̇` and accelerations `𝖵̇ = 𝖩ϑ̈ + 𝖩̇ϑ̇`.
pub fn system_motion(
    limb: &LimbModel,
    theta: &DVector<f64>,
    theta_dot: &DVector<f64>,
    theta_ddot: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let sj = system_jacobian(limb, theta);
    let jd = jacobian_dot(limb, &sj, theta_dot);
    let v = &sj.j * theta_dot;
    let vd = &sj.j * theta_ddot + jd * theta_dot;
    (v, vd)
}

/// Body twists and accelerations of every frame, computed recursively along
/// the tree without forming `𝖩`.
pub fn frame_motion(
    limb: &LimbModel,
    tk: &TreeKinematics,
    theta_dot: &DVector<f64>,
    theta_ddot: &DVector<f64>,
) -> (Vec<Vec6>, Vec<Vec6>) {
    let n = limb.n_vars();
    let mut v = vec![Vec6::zeros(); n];
    let mut vd = vec![Vec6::zeros(); n];
    for i in 0..n {
        let x = limb.frames[i].x;
        let (vp, vdp) = match limb.graph.var_parent(i) {
            Some(p) => {
                let rel = adjoint_inv(&tk.poses[i]) * adjoint(&tk.poses[p]);
                (rel * v[p], rel * vd[p])
            }
            None => (Vec6::zeros(), Vec6::zeros()),
        };
        v[i] = vp + x * theta_dot[i];
        // Body-fixed recursion: V̇_i = Ad V̇_p + ad_{Ad V_p} X ϑ̇_i + X ϑ̈_i.
        vd[i] = vdp + ad(&vp) * x * theta_dot[i] + x * theta_ddot[i];
    }
    (v, vd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LimbModel;
    use crate::se3::{revolute_screw, rot_y, Vec3};
    use crate::topology::{build_limb_graph, JointDef, JointKind};
    use alloc::vec;
    use core::f64::consts::FRAC_PI_2;

    fn one_joint() -> LimbModel {
        let g = build_limb_graph(1, &[JointDef::new(1, JointKind::Revolute, 0, 1)], &[]).unwrap();
        let a = Pose::from_translation(Vec3::new(1.0, 0.0, 0.0));
        LimbModel::new(
            g,
            &[vec![revolute_screw(&Vec3::y(), &Vec3::zeros())]],
            vec![Pose::identity(), a],
            vec![],
            1,
            DMatrix::identity(6, 6),
            DMatrix::identity(6, 6),
        )
        .unwrap()
    }

    #[test]
    fn single_revolute_rotates_reference() {
        let l = one_joint();
        let p = body_pose(&l, &DVector::from_element(1, FRAC_PI_2), 1).unwrap();
        assert!((p.rotation - rot_y(FRAC_PI_2)).abs().max() < 1e-15);
        assert!((p.translation - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn single_joint_jacobian_is_its_body_screw() {
        let l = one_joint();
        let sj = system_jacobian(&l, &DVector::from_element(1, 0.3));
        assert!((sj.j.column(0) - l.frames[0].x).norm() < 1e-15);
        let jd = jacobian_dot(&l, &sj, &DVector::from_element(1, 2.0));
        assert_eq!(jd.abs().max(), 0.0);
    }

    #[test]
    fn zero_configuration_gives_reference_poses() {
        let l = one_joint();
        let p = all_poses(&l, &DVector::zeros(1)).unwrap();
        assert_eq!(p[1], l.body_ref[1]);
        assert_eq!(body_pose(&l, &DVector::zeros(1), 2), Err(Error::UnknownBody(2)));
    }
}
