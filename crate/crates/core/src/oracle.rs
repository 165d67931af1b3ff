//! Reference computations that avoid the closed-form machinery: central
//! finite differences, and an inverse-dynamics solution of the whole
//! manipulator with Lagrange multipliers for every cut joint and for the
//! platform attachments.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::kinematics::body_pose;
use crate::model::{CutJointSpec, LimbModel, PkmModel};
use crate::se3::{ad, adjoint, adjoint_inv, first_order_increment, Pose, Vec6};

/// Central difference of a vector function along a scalar parameter.
pub fn central_difference<F>(mut f: F, h: f64) -> DVector<f64>
where
    F: FnMut(f64) -> DVector<f64>,
{
    (f(h) - f(-h)) / (2.0 * h)
}

/// Jacobian of `f` at `x` by central differences.
pub fn fd_jacobian<F>(mut f: F, x: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let f0 = f(x);
    let mut j = DMatrix::zeros(f0.len(), x.len());
    for c in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += h;
        xm[c] -= h;
        j.set_column(c, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    j
}

/// Body-frame velocity `(C⁻¹ dC)ᵛ` of a pose-valued function along a scalar
/// parameter.
pub fn pose_rate<F>(mut f: F, h: f64) -> Vec6
where
    F: FnMut(f64) -> Pose,
{
    let c0 = f(0.0).inverse();
    (first_order_increment(&(c0 * f(h))) - first_order_increment(&(c0 * f(-h)))) / (2.0 * h)
}

/// Body Jacobian of `body` by differentiating its pose.
pub fn body_jacobian_fd(limb: &LimbModel, theta: &DVector<f64>, body: usize, h: f64) -> Result<DMatrix<f64>, Error> {
    body_pose(limb, theta, body)?;
    let mut j = DMatrix::zeros(6, limb.n_vars());
    for c in 0..limb.n_vars() {
        let col = pose_rate(
            |s| {
                let mut t = theta.clone();
                t[c] += s;
                body_pose(limb, &t, body).expect("body checked")
            },
            h,
        );
        j.fixed_view_mut::<6, 1>(0, c).copy_from(&col);
    }
    Ok(j)
}

/// Position-level residual of a cut joint computed from body poses.
pub fn cut_residual(limb: &LimbModel, spec: &CutJointSpec, theta: &DVector<f64>) -> DVector<f64> {
    let ck = body_pose(limb, theta, spec.k).expect("cut body");
    let cr = body_pose(limb, theta, spec.r).expect("cut body");
    let d = ck.inverse().transform_point(&cr.transform_point(&spec.d_r)) - spec.d_k;
    let rkr = ck.rotation.transpose() * cr.rotation;
    let pos = spec.locks.iter().map(|u| u.dot(&d));
    let rot = spec.orientation.iter().map(|o| o.on_k.dot(&(rkr * o.on_r)));
    DVector::from_iterator(spec.n_constraints(), pos.chain(rot))
}

/// Body Jacobian by the adjoint formula, without the system matrices.
fn jacobian_direct(limb: &LimbModel, poses: &[Pose], var: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(6, limb.n_vars());
    for c in 0..limb.n_vars() {
        if limb.graph.var_precedes(c, var) {
            let d = poses[var].inverse() * poses[c];
            j.fixed_view_mut::<6, 1>(0, c).copy_from(&(adjoint(&d) * limb.frames[c].x));
        }
    }
    j
}

/// `J̇_k ϑ̇ = Σ_j (Ad_D ad_{V_j} − ad_{V_k} Ad_D) X_j ϑ̇_j`, `D = C_k⁻¹C_j`.
fn jacobian_dot_times_rate(limb: &LimbModel, poses: &[Pose], jacs: &[DMatrix<f64>], var: usize, theta_dot: &DVector<f64>) -> Vec6 {
    let twist = |i: usize| Vec6::from_column_slice((&jacs[i] * theta_dot).as_slice());
    let vk = twist(var);
    let mut out = Vec6::zeros();
    for c in 0..limb.n_vars() {
        if limb.graph.var_precedes(c, var) {
            let adj = adjoint(&(poses[var].inverse() * poses[c]));
            out += (adj * ad(&twist(c)) - ad(&vk) * adj) * limb.frames[c].x * theta_dot[c];
        }
    }
    out
}

fn var_poses(limb: &LimbModel, theta: &DVector<f64>) -> Vec<Pose> {
    (0..limb.n_vars())
        .map(|v| {
            let mut pose = limb.frames[v].a;
            let mut cur = Some(v);
            let mut chain = Vec::new();
            while let Some(c) = cur {
                chain.push(c);
                cur = limb.graph.var_parent(c);
            }
            for &c in &chain {
                pose = crate::se3::exp_se3(&limb.frames[c].y, theta[c]) * pose;
            }
            pose
        })
        .collect()
}

/// Newton-Euler wrench `M V̇ − ad_Vᵀ M V − M Ad_C⁻¹(0; g)` of one body.
fn body_wrench(m: &crate::se3::Mat6, c: &Pose, v: &Vec6, vd: &Vec6, g: &crate::se3::Vec3) -> Vec6 {
    let grav = Vec6::new(0.0, 0.0, 0.0, g.x, g.y, g.z);
    m * vd - ad(v).transpose() * (m * v) - m * (adjoint_inv(c) * grav)
}

/// Actuator forces from the full constrained equations of motion: both
/// limb trees with their loops cut, plus the platform as a free body, with
/// all cut-joint and attachment constraints enforced by multipliers that are
/// eliminated in the least-squares sense.
///
/// `states` holds `(ϑ, ϑ̇, ϑ̈)` of every limb; `v_p`, `v_p_dot` are the
/// platform's body twist and its derivative.
pub fn multiplier_inverse_dynamics(
    pkm: &PkmModel,
    states: &[(DVector<f64>, DVector<f64>, DVector<f64>)],
    c_p: &Pose,
    v_p: &Vec6,
    v_p_dot: &Vec6,
    h: f64,
) -> DVector<f64> {
    let n_tot: usize = pkm.limbs.iter().map(|l| l.n_vars()).sum::<usize>() + 6;
    let n_act: usize = pkm.actuators.iter().map(|a| a.len()).sum();
    let mut rhs = DVector::zeros(n_tot);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for _ in 0..n_act {
        cols.push(DVector::zeros(n_tot));
    }

    let mut off = 0;
    let mut act = 0;
    let pd = n_tot - 6;
    for ((limb, acts), (th, thd, thdd)) in pkm.limbs.iter().zip(&pkm.actuators).zip(states) {
        let n = limb.n_vars();
        let poses = var_poses(limb, th);
        let jacs: Vec<DMatrix<f64>> = (0..n).map(|v| jacobian_direct(limb, &poses, v)).collect();
        let mut q = DVector::zeros(n);
        for (b, fv) in limb.massive_frames() {
            let v = Vec6::from_column_slice((&jacs[fv] * thd).as_slice());
            let vd = Vec6::from_column_slice((&jacs[fv] * thdd).as_slice()) + jacobian_dot_times_rate(limb, &poses, &jacs, fv, thd);
            let w = body_wrench(&limb.inertia[b], &poses[fv], &v, &vd, &pkm.gravity);
            q += jacs[fv].transpose() * DVector::from_column_slice(w.as_slice());
        }
        rhs.rows_mut(off, n).copy_from(&q);
        for &a in acts {
            cols[act][off + a] = 1.0;
            act += 1;
        }
        for cy in &limb.cycles {
            let g = fd_jacobian(|t| cut_residual(limb, &cy.cut, t), th, h);
            for r in 0..g.nrows() {
                let mut c = DVector::zeros(n_tot);
                c.rows_mut(off, n).copy_from(&g.row(r).transpose());
                cols.push(c);
            }
        }
        let jp = body_jacobian_fd(limb, th, limb.platform, h).expect("platform body");
        for r in 0..6 {
            let mut c = DVector::zeros(n_tot);
            c.rows_mut(off, n).copy_from(&jp.row(r).transpose());
            c[pd + r] = -1.0;
            cols.push(c);
        }
        off += n;
    }
    let wp = body_wrench(&pkm.platform_inertia, c_p, v_p, v_p_dot, &pkm.gravity);
    rhs.rows_mut(pd, 6).copy_from(&DVector::from_column_slice(wp.as_slice()));

    let a = DMatrix::from_columns(&cols);
    let svd = a.svd(true, true);
    let tol = 1e-9 * svd.singular_values.max();
    let x = svd.solve(&rhs, tol).expect("SVD with vectors");
    x.rows(0, n_act).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn central_difference_of_cubic() {
        let d = central_difference(|s| DVector::from_vec(vec![(1.0 + s) * (1.0 + s) * (1.0 + s)]), 1e-4);
        assert!((d[0] - 3.0).abs() < 1e-7);
    }

    #[test]
    fn fd_jacobian_of_linear_map() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let j = fd_jacobian(|x| &m * x, &DVector::from_vec(vec![0.1, 0.2, 0.3]), 1e-3);
        assert!((j - m).abs().max() < 1e-10);
    }
}
