mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use pkm_core::irsbot2::{build_limb, IrsbotParams, ProximalMode, PLATFORM};
use pkm_core::kinematics::*;
use pkm_core::oracle::{body_jacobian_fd, fd_jacobian};
use pkm_core::se3::{exp_se3, Vec6};
use pkm_core::topology::JointKind;
use pkm_core::{Error, LimbModel, Pose};
use proptest::prelude::*;

fn limb(mirrored: bool) -> LimbModel {
    build_limb(&IrsbotParams::default(), mirrored, ProximalMode::CutJoint).unwrap()
}

/// Pose of `body` by the product of exponentials over its driving variables.
fn poe(limb: &LimbModel, theta: &DVector<f64>, body: usize) -> Pose {
    let mut c = Pose::identity();
    for v in limb.graph.predecessor_vars(body) {
        c = c * exp_se3(&limb.frames[v].y, theta[v]);
    }
    c * limb.body_ref[body]
}

fn flatten(v: &[Vec6]) -> DVector<f64> {
    DVector::from_iterator(6 * v.len(), v.iter().flat_map(|x| x.iter().copied()))
}

#[test]
fn limb_graph_bookkeeping() {
    let l = limb(false);
    let g = &l.graph;
    assert_eq!(g.body_count(), 6);
    assert_eq!(g.n_vars(), 9);
    assert_eq!(g.tree_joints().len(), 6);
    let cuts: Vec<usize> = g.cut_joints().iter().map(|c| c.id).collect();
    assert_eq!(cuts, vec![7, 8]);
    let fc = g.fundamental_cycles();
    assert_eq!(fc.len(), 2);
    assert_eq!(fc[0].vars, vec![0, 1, 2]);
    assert_eq!(fc[1].vars, vec![3, 4, 5, 6, 7, 8]);
    assert_eq!(l.cycles[0].n_constraints(), 2);
    assert_eq!(l.cycles[1].n_constraints(), 4);
    assert_eq!(l.dof(), 3);
    assert!(g.free_vars().is_empty());
    let kinds: Vec<JointKind> = g.tree_joints().iter().map(|j| j.kind).collect();
    assert_eq!(kinds[3..], [JointKind::Universal; 3]);
    assert_eq!(g.driving_joints(PLATFORM).unwrap(), vec![1, 2, 4, 6]);
    assert_eq!(g.predecessor_set(5).unwrap(), vec![1, 2, 5]);
    assert!(matches!(g.predecessor_set(9), Err(Error::UnknownBody(9))));
}

#[test]
fn unknown_body_is_rejected() {
    let l = limb(false);
    assert!(matches!(body_pose(&l, &DVector::zeros(9), 7), Err(Error::UnknownBody(7))));
    assert!(matches!(body_pose(&l, &DVector::zeros(4), 1), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn zero_configuration_gives_reference_poses() {
    for mirrored in [false, true] {
        let l = limb(mirrored);
        let poses = all_poses(&l, &DVector::zeros(9)).unwrap();
        assert_eq!(poses.len(), 7);
        for (b, (p, r)) in poses.iter().zip(&l.body_ref).enumerate() {
            let e = p.to_matrix() - r.to_matrix();
            assert!(e.abs().max() < 1e-15, "body {b}");
        }
    }
}

#[test]
fn limbs_are_mirror_images() {
    let (a, b) = (limb(false), limb(true));
    let s = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(-1.0, 1.0, 1.0));
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        // A reflection maps an axis to minus its mirror and a moment arm to its mirror.
        let wa = fa.y.fixed_rows::<3>(0).into_owned();
        let wb = fb.y.fixed_rows::<3>(0).into_owned();
        assert!((wb + s * wa).norm() < 1e-14 || (wb - s * wa).norm() < 1e-14);
        assert!((fb.a.translation - s * fa.a.translation).norm() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recursive_poses_match_product_of_exponentials(th in angles(9), mirrored in any::<bool>()) {
        let l = limb(mirrored);
        for b in 1..=6 {
            let e = body_pose(&l, &th, b).unwrap().to_matrix() - poe(&l, &th, b).to_matrix();
            prop_assert!(e.abs().max() < 1e-13);
        }
    }

    #[test]
    fn body_jacobians_match_finite_differences(th in angles(9), mirrored in any::<bool>()) {
        let l = limb(mirrored);
        let tk = TreeKinematics::new(&l, &th);
        for b in 1..=6 {
            let fd = body_jacobian_fd(&l, &th, b, 1e-6).unwrap();
            prop_assert!(rel_err(&tk.body_jacobian(&l, b), &fd) < 1e-8);
        }
    }

    #[test]
    fn system_jacobian_blocks_match_frame_jacobians(th in angles(9)) {
        let l = limb(false);
        let sj = system_jacobian(&l, &th);
        let tk = TreeKinematics::new(&l, &th);
        for v in 0..9 {
            prop_assert!((sj.rows(v) - tk.frame_jacobian(&l, Some(v))).abs().max() < 1e-13);
        }
        prop_assert!((&sj.j - &sj.a * &sj.x).abs().max() < 1e-15);
    }

    #[test]
    fn jacobian_derivatives_match_finite_differences(th in angles(9), thd in angles(9)) {
        let l = limb(false);
        let h = 1e-6;
        let sj = system_jacobian(&l, &th);
        let fd = (system_jacobian(&l, &(&th + &thd * h)).j - system_jacobian(&l, &(&th - &thd * h)).j) / (2.0 * h);
        prop_assert!(scaled_err(&jacobian_dot(&l, &sj, &thd), &fd, sj.j.norm() * thd.norm()) < 1e-7);
        let tk = TreeKinematics::new(&l, &th);
        for v in [2, 5, 8] {
            let jp = |t: &DVector<f64>| TreeKinematics::new(&l, t).frame_jacobian(&l, Some(v));
            let fd = (jp(&(&th + &thd * h)) - jp(&(&th - &thd * h))) / (2.0 * h);
            let scale = tk.frame_jacobian(&l, Some(v)).norm() * thd.norm();
            prop_assert!(scaled_err(&tk.frame_jacobian_dot(&l, Some(v), &thd), &fd, scale) < 1e-7);
        }
    }

    #[test]
    fn recursive_motion_matches_system_motion(th in angles(9), thd in angles(9), thdd in angles(9)) {
        let l = limb(true);
        let (v, vd) = system_motion(&l, &th, &thd, &thdd);
        let tk = TreeKinematics::new(&l, &th);
        let (vr, vdr) = frame_motion(&l, &tk, &thd, &thdd);
        prop_assert!((flatten(&vr) - v).abs().max() < 1e-12);
        prop_assert!((flatten(&vdr) - vd).abs().max() < 1e-11);
    }

    #[test]
    fn accelerations_match_differentiated_twists(th in angles(9), thd in angles(9), thdd in angles(9)) {
        let l = limb(false);
        let twist = |s: f64| {
            let t = &th + &thd * s + &thdd * (0.5 * s * s);
            let td = &thd + &thdd * s;
            system_motion(&l, &t, &td, &DVector::zeros(9)).0
        };
        let h = 1e-5;
        let fd = (twist(h) - twist(-h)) / (2.0 * h);
        let (_, vd) = system_motion(&l, &th, &thd, &thdd);
        prop_assert!(rel_err_v(&vd, &fd) < 1e-7);
    }

    #[test]
    fn platform_translation_jacobian_matches_finite_differences(th in angles(9)) {
        let l = limb(false);
        let fd = fd_jacobian(|t| {
            let p = platform_pose(&l, t);
            DVector::from_column_slice(p.translation.as_slice())
        }, &th, 1e-6);
        let tk = TreeKinematics::new(&l, &th);
        let c = tk.body_pose(&l, PLATFORM);
        // Inertial-frame translation rate is R times the body-frame linear rows.
        let jb = tk.body_jacobian(&l, PLATFORM);
        let jv = DMatrix::from_fn(3, 9, |r, col| (c.rotation * jb.fixed_view::<3, 1>(3, col)).index(r).to_owned());
        prop_assert!(rel_err(&jv, &fd) < 1e-8);
    }
}
