//! SE(3) poses, se(3) twists, exponentials and adjoint operators.
//!
//! Six-vectors are ordered `(angular; linear)` throughout, so a twist is
//! `(ω; v)`, a screw axis is `(e; y × e)` and a wrench is `(moment; force)`.

use core::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};
// Shadowed by the inherent methods whenever std is linked.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat6 = Matrix6<f64>;
pub type Twist = Vector6<f64>;
pub type ScrewAxis = Vector6<f64>;
pub type Wrench = Vector6<f64>;

/// Tolerance used by [`vee`] to accept a 4×4 matrix as an element of se(3).
pub const SE3_TOL: f64 = 1e-12;

/// Rigid transform `x ↦ R x + r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self { rotation: Mat3::identity(), translation }
    }

    pub fn from_rotation(rotation: Mat3) -> Self {
        Self { rotation, translation: Vec3::zeros() }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self · other`.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Largest entry of `RᵀR − I` and `|det R − 1|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let e = (self.rotation.transpose() * self.rotation - Mat3::identity()).abs().max();
        e.max((self.rotation.determinant() - 1.0).abs())
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.orthogonality_defect() <= tol && self.translation.iter().all(|v| v.is_finite())
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a Pose> for &'a Pose {
    type Output = Pose;
    fn mul(self, rhs: &'a Pose) -> Pose {
        self.compose(rhs)
    }
}

/// Weights of the left-invariant norm `α‖ω‖ + β‖v‖`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

impl MetricWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, Error> {
        if !(alpha >= 0.0 && beta >= 0.0) || (alpha == 0.0 && beta == 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidInput("metric weights must be non-negative, finite and not both zero"));
        }
        Ok(Self { alpha, beta })
    }
}

pub fn angular(x: &Vec6) -> Vec3 {
    x.fixed_rows::<3>(0).into_owned()
}

pub fn linear(x: &Vec6) -> Vec3 {
    x.fixed_rows::<3>(3).into_owned()
}

pub fn twist(angular: &Vec3, linear: &Vec3) -> Vec6 {
    Vec6::new(angular.x, angular.y, angular.z, linear.x, linear.y, linear.z)
}

/// Cross-product matrix: `skew(a) b = a × b`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Axial vector of the skew-symmetric part of `m`.
pub fn unskew(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

pub fn hat(x: &Vec6) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&angular(x)));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&linear(x));
    m
}

pub fn vee(a: &Matrix4<f64>) -> Result<Vec6, Error> {
    let w = a.fixed_view::<3, 3>(0, 0);
    let sym = (w + w.transpose()).abs().max();
    let last = a.fixed_view::<1, 4>(3, 0).abs().max();
    if sym > SE3_TOL || last > SE3_TOL {
        return Err(Error::NotSe3);
    }
    Ok(Vec6::new(a[(2, 1)], a[(0, 2)], a[(1, 0)], a[(0, 3)], a[(1, 3)], a[(2, 3)]))
}

/// `exp(θ·hat(x))`.
pub fn exp_se3(x: &Vec6, theta: f64) -> Pose {
    let w = angular(x) * theta;
    let v = linear(x) * theta;
    let phi = w.norm();
    let (a, b, c) = if phi < 1e-6 {
        let p2 = phi * phi;
        (1.0 - p2 / 6.0, 0.5 - p2 / 24.0, 1.0 / 6.0 - p2 / 120.0)
    } else {
        let (s, co) = phi.sin_cos();
        let p2 = phi * phi;
        (s / phi, (1.0 - co) / p2, (phi - s) / (p2 * phi))
    };
    let k = skew(&w);
    let k2 = k * k;
    let rotation = Mat3::identity() + k * a + k2 * b;
    let translation = (Mat3::identity() + k * b + k2 * c) * v;
    Pose { rotation, translation }
}

/// `Ad_C = [[R, 0], [r̃R, R]]`.
pub fn adjoint(c: &Pose) -> Mat6 {
    let mut m = Mat6::zeros();
    let r = &c.rotation;
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(skew(&c.translation) * r));
    m
}

/// `Ad_C⁻¹ = Ad_{C⁻¹}` without forming the inverse pose first.
pub fn adjoint_inv(c: &Pose) -> Mat6 {
    let mut m = Mat6::zeros();
    let rt = c.rotation.transpose();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&rt);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-rt * skew(&c.translation)));
    m
}

/// `ad_X = [[ω̃, 0], [ṽ, ω̃]]`, so that `ad_X Y` is the Lie bracket `[X, Y]`.
pub fn ad(x: &Vec6) -> Mat6 {
    let mut m = Mat6::zeros();
    let w = skew(&angular(x));
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&w);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&w);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&skew(&linear(x)));
    m
}

pub fn twist_norm(x: &Vec6, w: &MetricWeights) -> f64 {
    w.alpha * angular(x).norm() + w.beta * linear(x).norm()
}

/// Screw of a revolute joint with unit axis `e` through point `y`.
pub fn revolute_screw(e: &Vec3, y: &Vec3) -> Vec6 {
    twist(e, &y.cross(e))
}

/// Screw of a prismatic joint sliding along `e`.
pub fn prismatic_screw(e: &Vec3) -> Vec6 {
    twist(&Vec3::zeros(), e)
}

/// First-order twist increment of `ΔC ≈ I + hat(ΔX)`: the vee of `ΔC − I`,
/// with the rotation block reduced to its skew-symmetric part.
pub fn first_order_increment(delta: &Pose) -> Vec6 {
    twist(&unskew(&delta.rotation), &delta.translation)
}

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}
