#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3};
use pkm_core::irsbot2::{default_model, IrsbotParams};
use pkm_core::solver::{solve_limb_ik, tree_rates_from_task, IkSettings, LimbRates};
use pkm_core::{LimbModel, PkmModel, Pose};
use proptest::prelude::*;

/// Admissible limb state reached from the reference configuration.
pub struct LimbState {
    pub pose: Pose,
    pub theta: DVector<f64>,
    pub v_t: DVector<f64>,
    pub v_t_dot: DVector<f64>,
    pub rates: LimbRates,
}

pub fn model() -> PkmModel {
    default_model()
}

pub fn tight() -> IkSettings {
    IkSettings { epsilon: 1e-13, epsilon1: 1e-13, epsilon2: 1e-13, ..IkSettings::default() }
}

pub fn target(x: f64, z: f64) -> Pose {
    Pose::from_translation(IrsbotParams::default().platform_reference() + Vector3::new(x, 0.0, z))
}

pub fn solve_state(limb: &LimbModel, pose: &Pose, v_t: &[f64; 2], v_t_dot: &[f64; 2]) -> LimbState {
    let ik = solve_limb_ik(limb, &DVector::zeros(limb.n_vars()), pose, &tight()).expect("target inside the workspace");
    let v_t = DVector::from_column_slice(v_t);
    let v_t_dot = DVector::from_column_slice(v_t_dot);
    let rates = tree_rates_from_task(limb, &ik.theta, &v_t, &v_t_dot).expect("regular state");
    LimbState { pose: *pose, theta: ik.theta, v_t, v_t_dot, rates }
}

/// Platform offsets from the reference position that both limbs reach
/// without approaching a singularity.
pub fn offset() -> impl Strategy<Value = (f64, f64)> {
    (-0.2..0.2f64, -0.1..0.4f64)
}

pub fn rate2() -> impl Strategy<Value = [f64; 2]> {
    prop::array::uniform2(-2.0..2.0f64)
}

pub fn angles(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0..1.0f64, n).prop_map(DVector::from_vec)
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-9)
}

pub fn rel_err_v(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-9)
}

/// Error of `a` against `b` relative to `max(‖b‖, scale)`, for quantities
/// whose exact value can vanish while their natural magnitude is `scale`.
pub fn scaled_err(a: &DMatrix<f64>, b: &DMatrix<f64>, scale: f64) -> f64 {
    (a - b).norm() / b.norm().max(scale).max(1e-12)
}
