//! The IRSBot-2: a two-limb planar-translation manipulator whose limbs each
//! contain a parallelogram (proximal) loop and a spatial double-rod (distal)
//! loop of universal joints.
//!
//! Limb 1 lies on the +x side of the base. Limb 2 is its mirror image in the
//! y-z plane. Each limb has bodies 1 (crank), 2 (coupler), 3 (rocker), 4 and
//! 5 (rods) and 6 (platform); joints 7 (revolute) and 8 (universal) are cut.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3};
// Shadowed by the inherent methods whenever std is linked.
#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::{inverse_dynamics_step, system_energy, Energy};
use crate::error::Error;
use crate::kinematics::{frame_motion, TreeKinematics};
use crate::model::{Closure, CutJointSpec, CycleDef, LimbModel, OrientationPair, Partition, PkmModel};
use crate::se3::{revolute_screw, rot_y, rot_z, Mat3, Mat6, Pose, Vec3, Vec6};
use crate::solver::{pkm_step, warm_start_guess, IkSettings, PkmStep, SolverKind, TaskSample};
use crate::topology::{build_limb_graph, JointDef, JointKind};

pub const ALUMINIUM_DENSITY: f64 = 2700.0;
pub const GRAVITY: f64 = 9.81;
/// Body masses of bodies 1–5 of each limb and of the platform.
pub const BODY_MASSES: [f64; 6] = [1.17188, 8.11899, 21.1875, 1.1781, 1.1781, 1.97754];
pub const PLATFORM: usize = 6;

/// Geometric parameters (m, rad).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IrsbotParams {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c3: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub l1: f64,
    pub l2: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub alpha: f64,
    pub phi0: f64,
}

impl Default for IrsbotParams {
    /// The geometry used by the experiments: `a = 1/4`, `b = 1/6`,
    /// `L₁ = 1/2`, `L₂ = 3/4`.
    fn default() -> Self {
        Self::from_base(0.25, 1.0 / 6.0, 0.5, 0.75, PI / 6.0, PI / 4.0)
    }
}

impl IrsbotParams {
    /// Completes the parameter set from the base dimensions with
    /// `c₁ = d₁ = b₁/2`, `c₃ = d₃ = b₃`, `d₂ = a`, `P₁ = a/2`, `P₂ = d₂/2`,
    /// `P₃ = 0`.
    pub fn from_base(a: f64, b: f64, l1: f64, l2: f64, alpha: f64, phi0: f64) -> Self {
        let b1 = b * alpha.cos();
        let b3 = b * alpha.sin();
        Self {
            a,
            b,
            c1: b1 / 2.0,
            c3: b3,
            d1: b1 / 2.0,
            d2: a,
            d3: b3,
            l1,
            l2,
            p1: a / 2.0,
            p2: a / 2.0,
            p3: 0.0,
            alpha,
            phi0,
        }
    }

    /// Half-size variant `a = 1/8`, `b = 1/12`, `L₁ = 1/4`, `L₂ = 1/2`,
    /// whose primitive volumes give the tabulated body masses.
    pub fn half_scale() -> Self {
        Self::from_base(0.125, 1.0 / 12.0, 0.25, 0.5, PI / 6.0, PI / 4.0)
    }

    pub fn b1(&self) -> f64 {
        self.b * self.alpha.cos()
    }

    pub fn b3(&self) -> f64 {
        self.b * self.alpha.sin()
    }

    pub fn e1(&self) -> f64 {
        self.b1() - self.c1
    }

    pub fn e3(&self) -> f64 {
        self.b3() + self.c3
    }

    /// Horizontal reach of a rod from the coupler to the platform.
    pub fn u(&self) -> f64 {
        self.a + self.c1 + self.d1 - self.p1 + self.l1 * self.phi0.sin()
    }

    pub fn beta(&self) -> f64 {
        (self.d2 - self.p2).atan2(self.u())
    }

    fn rod_reach(&self) -> f64 {
        (self.d2 - self.p2).hypot(self.u())
    }

    pub fn psi0(&self) -> f64 {
        let s = self.rod_reach();
        s.atan2((self.l2 * self.l2 - s * s).sqrt())
    }

    /// Height of the coupler's universal joints at the reference.
    pub fn z_u(&self) -> f64 {
        -self.c3 - self.d3 - self.l1 * self.phi0.cos()
    }

    /// Height of the platform's joint centers at the reference.
    pub fn z_platform(&self) -> f64 {
        self.z_u() - self.l2 * self.psi0().cos()
    }

    /// Platform height below the base at the reference.
    pub fn h0(&self) -> f64 {
        -(self.z_platform() - self.p3)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let v = [self.a, self.b, self.c1, self.c3, self.d1, self.d2, self.d3, self.l1, self.l2, self.p1, self.p2];
        if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) || !self.p3.is_finite() {
            return Err(Error::InvalidInput("lengths must be positive and finite"));
        }
        if !(self.alpha.is_finite() && self.phi0.is_finite()) {
            return Err(Error::InvalidInput("angles must be finite"));
        }
        if self.rod_reach() >= self.l2 {
            return Err(Error::InvalidInput("rods are too short to reach the platform"));
        }
        Ok(())
    }

    /// Reference platform position.
    pub fn platform_reference(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.z_platform() - self.p3)
    }
}

/// How the parallelogram loop is closed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ProximalMode {
    /// Exact closure `φ₁ = φ₃ = −φ₂`.
    #[default]
    Analytic,
    /// Two in-plane translation constraints solved numerically.
    CutJoint,
}

/// Joint geometry of limb 1 at the reference, in the inertial frame.
struct LimbGeometry {
    points: [Vec3; 7],
    axes: [[Vec3; 2]; 6],
    frames: [Pose; 6],
}

fn limb_geometry(p: &IrsbotParams) -> LimbGeometry {
    let (sp, cp) = (p.phi0.sin(), p.phi0.cos());
    let (sb, cb) = (p.beta().sin(), p.beta().cos());
    let (ss, cs) = (p.psi0().sin(), p.psi0().cos());
    let (b1, b3) = (p.b1(), p.b3());
    let zu = p.z_u();
    let z6 = p.z_platform();
    let xu = p.a + p.c1 + p.d1 + p.l1 * sp;

    let y1 = Vec3::new(p.a, 0.0, 0.0);
    let y2 = Vec3::new(p.a + p.l1 * sp, 0.0, -p.l1 * cp);
    let y3 = Vec3::new(p.a + b1, 0.0, b3);
    let y4 = Vec3::new(xu, -p.d2, zu);
    let y5 = Vec3::new(xu, p.d2, zu);
    let y6 = Vec3::new(p.p1, -p.p2, z6);
    let y7 = Vec3::new(p.a + b1 + p.l1 * sp, 0.0, b3 - p.l1 * cp);
    let y8 = Vec3::new(p.p1, p.p2, z6);

    let e = Vec3::y();
    let e41 = Vec3::new(sb, cb, 0.0);
    let e42 = Vec3::new(cb * cs, -sb * cs, -ss);
    let e51 = Vec3::new(-sb, cb, 0.0);
    let e52 = Vec3::new(cb * cs, sb * cs, -ss);

    let r_crank = rot_y(-p.phi0);
    let frames = [
        Pose::new(r_crank, (y1 + y2) / 2.0),
        Pose::from_translation(Vec3::new(y2.x + p.c1 + p.d1, 0.0, y2.z - (p.c3 + p.d3) / 2.0)),
        Pose::new(r_crank, (y3 + y7) / 2.0),
        Pose::new(rot_z(-p.beta()) * rot_y(p.psi0()), (y4 + y6) / 2.0),
        Pose::new(rot_z(p.beta()) * rot_y(p.psi0()), (y5 + y8) / 2.0),
        Pose::from_translation(Vec3::new(0.0, 0.0, z6)),
    ];
    LimbGeometry {
        points: [y1, y2, y3, y4, y5, y6, y7],
        axes: [[e, e], [e, e], [e, e], [e41, e42], [e51, e52], [e42, e41]],
        frames,
    }
}

fn mirror() -> Mat3 {
    Matrix3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0))
}

fn mirror_pose(c: &Pose, s: &Mat3) -> Pose {
    Pose::new(s * c.rotation * s, s * c.translation)
}

fn task_selector() -> DMatrix<f64> {
    let mut p = DMatrix::zeros(3, 6);
    for i in 0..3 {
        p[(i, 3 + i)] = 1.0;
    }
    p
}

fn task_distribution() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
}

/// Map from the task velocity `(v₁, v₃)` to the platform twist.
pub fn platform_distribution() -> DMatrix<f64> {
    let mut p = DMatrix::zeros(6, 2);
    p[(3, 0)] = 1.0;
    p[(5, 1)] = 1.0;
    p
}

/// Kinematic model of one limb (`mirrored = false` for limb 1).
pub fn build_limb(p: &IrsbotParams, mirrored: bool, mode: ProximalMode) -> Result<LimbModel, Error> {
    p.validate()?;
    let g = limb_geometry(p);
    let s = if mirrored { mirror() } else { Mat3::identity() };
    let pt = |v: &Vec3| s * v;

    let joints = [
        JointDef::new(1, JointKind::Revolute, 0, 1),
        JointDef::new(2, JointKind::Revolute, 1, 2),
        JointDef::new(3, JointKind::Revolute, 0, 3),
        JointDef::new(4, JointKind::Universal, 2, 4),
        JointDef::new(5, JointKind::Universal, 2, 5),
        JointDef::new(6, JointKind::Universal, 4, 6),
        JointDef::new(7, JointKind::Revolute, 2, 3),
        JointDef::new(8, JointKind::Universal, 5, 6),
    ];
    let graph = build_limb_graph(6, &joints, &[7, 8])?;
    let joint_point = [0usize, 1, 2, 3, 4, 5];
    let screws: Vec<Vec<Vec6>> = graph
        .tree_joints()
        .iter()
        .map(|j| {
            let i = j.id - 1;
            let y = pt(&g.points[joint_point[i]]);
            g.axes[i][..j.kind.dof()].iter().map(|e| revolute_screw(&pt(e), &y)).collect()
        })
        .collect();
    let mut body_ref = vec![Pose::identity()];
    body_ref.extend(g.frames.iter().map(|f| mirror_pose(f, &s)));

    let y7 = g.points[6];
    let proximal_cut = CutJointSpec {
        k: 2,
        r: 3,
        d_k: s * g.frames[1].inverse().transform_point(&y7),
        d_r: s * g.frames[2].inverse().transform_point(&y7),
        locks: vec![pt(&Vec3::x()), pt(&Vec3::z())],
        orientation: vec![],
    };
    let proximal = CycleDef {
        cut: proximal_cut,
        partition: Partition { dependent: vec![1, 2], independent: vec![0] },
        closure: match mode {
            ProximalMode::Analytic => Closure::Explicit(DMatrix::from_column_slice(3, 1, &[1.0, -1.0, 1.0])),
            ProximalMode::CutJoint => Closure::CutJoint,
        },
        overconstrained: false,
    };
    let beta = p.beta();
    let distal = CycleDef {
        cut: CutJointSpec {
            k: PLATFORM,
            r: 5,
            d_k: pt(&Vec3::new(p.p1, p.p2, p.p3)),
            d_r: pt(&Vec3::new(0.0, 0.0, -p.l2 / 2.0)),
            locks: vec![pt(&Vec3::x()), pt(&Vec3::y()), pt(&Vec3::z())],
            orientation: vec![OrientationPair {
                on_k: pt(&Vec3::new(-beta.sin(), beta.cos(), 0.0)),
                on_r: pt(&Vec3::x()),
            }],
        },
        partition: Partition { dependent: vec![0, 1, 2, 3], independent: vec![4, 5] },
        closure: Closure::CutJoint,
        overconstrained: false,
    };
    LimbModel::new(graph, &screws, body_ref, vec![proximal, distal], PLATFORM, task_selector(), task_distribution())
}

/// Geometric primitive used to estimate a body's inertia.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    /// Beam along the body z-axis with a square cross section.
    SquareBeam { length: f64, side: f64 },
    /// Beam along the body z-axis with a circular cross section.
    CircularBeam { length: f64, radius: f64 },
    /// Rectangular solid with edges along the body axes.
    Block { x: f64, y: f64, z: f64 },
}

impl Primitive {
    pub fn volume(&self) -> f64 {
        match *self {
            Primitive::SquareBeam { length, side } => length * side * side,
            Primitive::CircularBeam { length, radius } => PI * radius * radius * length,
            Primitive::Block { x, y, z } => x * y * z,
        }
    }

    /// Principal moments of inertia about the centroid for mass `m`.
    pub fn moments(&self, m: f64) -> Vec3 {
        match *self {
            Primitive::SquareBeam { length, side } => {
                let t = m * (length * length + side * side) / 12.0;
                Vec3::new(t, t, m * side * side / 6.0)
            }
            Primitive::CircularBeam { length, radius } => {
                let t = m * (3.0 * radius * radius + length * length) / 12.0;
                Vec3::new(t, t, m * radius * radius / 2.0)
            }
            Primitive::Block { x, y, z } => Vec3::new(m * (y * y + z * z), m * (x * x + z * z), m * (x * x + y * y)) / 12.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BodyMass {
    pub body: usize,
    pub shape: Primitive,
    pub density: f64,
    pub mass: f64,
    /// Body-frame mass matrix about the centroid.
    pub inertia: Mat6,
}

impl BodyMass {
    pub fn primitive_mass(&self) -> f64 {
        self.shape.volume() * self.density
    }
}

/// Mass properties of bodies 1–6 (index 0 is body 1).
#[derive(Clone, Debug, PartialEq)]
pub struct MassModel {
    pub bodies: Vec<BodyMass>,
}

impl MassModel {
    pub fn total_moving_mass(&self) -> f64 {
        2.0 * self.bodies[..5].iter().map(|b| b.mass).sum::<f64>() + self.bodies[5].mass
    }

    /// Limb inertia list indexed by body (entry 0 is the ground); the
    /// platform entry is zero since the platform is carried separately.
    pub fn limb_inertia(&self) -> Vec<Mat6> {
        let mut out = vec![Mat6::zeros(); 7];
        for b in &self.bodies[..5] {
            out[b.body] = b.inertia;
        }
        out
    }

    pub fn platform_inertia(&self) -> Mat6 {
        self.bodies[5].inertia
    }
}

pub fn spatial_inertia(m: f64, moments: &Vec3) -> Mat6 {
    let mut out = Mat6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::from_diagonal(moments));
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * m));
    out
}

pub fn primitives(p: &IrsbotParams) -> [Primitive; 6] {
    [
        Primitive::SquareBeam { length: p.l1, side: p.l1 / 6.0 },
        Primitive::Block { x: 2.0 * (p.c1 + p.d1), y: 2.0 * p.d2, z: p.c3 + p.d3 },
        Primitive::SquareBeam { length: p.l1, side: p.l1 / 10.0 },
        Primitive::CircularBeam { length: p.l2, radius: p.l2 / 30.0 },
        Primitive::CircularBeam { length: p.l2, radius: p.l2 / 30.0 },
        Primitive::Block { x: 4.0 * p.p1, y: 3.0 * p.p2, z: p.p2 / 4.0 },
    ]
}

/// Aluminium primitives sized from `p` with masses set to [`BODY_MASSES`].
pub fn default_mass_model(p: &IrsbotParams) -> MassModel {
    let bodies = primitives(p)
        .iter()
        .zip(BODY_MASSES)
        .enumerate()
        .map(|(i, (shape, mass))| BodyMass {
            body: i + 1,
            shape: *shape,
            density: ALUMINIUM_DENSITY,
            mass,
            inertia: spatial_inertia(mass, &shape.moments(mass)),
        })
        .collect();
    MassModel { bodies }
}

/// Both limbs, platform distribution, actuators `φ₁` and downward gravity.
pub fn build_model(p: &IrsbotParams, mode: ProximalMode) -> Result<PkmModel, Error> {
    build_model_with_masses(p, mode, &default_mass_model(p))
}

pub fn build_model_with_masses(p: &IrsbotParams, mode: ProximalMode, masses: &MassModel) -> Result<PkmModel, Error> {
    let inertia = masses.limb_inertia();
    let limbs = [false, true]
        .iter()
        .map(|&m| build_limb(p, m, mode)?.with_inertia(inertia.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    PkmModel::new(limbs, vec![vec![0], vec![0]], platform_distribution(), masses.platform_inertia(), Vec3::new(0.0, 0.0, -GRAVITY))
}

pub fn default_model() -> PkmModel {
    build_model(&IrsbotParams::default(), ProximalMode::Analytic).expect("default parameters are valid")
}

/// Parabolic platform path `r₀ + (Δx·s, 0, 4Δz·s(1−s))` with the motion
/// profile `s = sin²(νπt/T)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySpec {
    pub r0: Vec3,
    pub dx: f64,
    pub dz: f64,
    pub nu: f64,
    pub duration: f64,
    pub dt: f64,
}

impl TrajectorySpec {
    pub fn nominal(p: &IrsbotParams) -> Self {
        Self { r0: p.platform_reference(), dx: 0.25, dz: 0.45, nu: 3.0, duration: 1.0, dt: 1e-3 }
    }

    /// Path passing close to a stretched-out limb 1.
    pub fn singular(p: &IrsbotParams) -> Self {
        Self { dx: -0.15, dz: -0.6085, ..Self::nominal(p) }
    }

    pub fn with_dt(self, dt: f64) -> Self {
        Self { dt, ..self }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.dt > 0.0 && self.duration > 0.0 && self.dt.is_finite() && self.duration.is_finite()) {
            return Err(Error::InvalidInput("time step and duration must be positive"));
        }
        if ![self.dx, self.dz, self.nu].iter().all(|x| x.is_finite()) || !self.r0.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("trajectory parameters must be finite"));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }

    /// Platform pose, task velocity `(v₁, v₃)` and task acceleration.
    pub fn eval(&self, t: f64) -> TaskSample {
        let w = self.nu * PI / self.duration;
        let sn = (w * t).sin();
        let s = sn * sn;
        let s_d = w * (2.0 * w * t).sin();
        let s_dd = 2.0 * w * w * (2.0 * w * t).cos();
        let z = 4.0 * self.dz * (s - s * s);
        let z_d = 4.0 * self.dz * (s_d - 2.0 * s * s_d);
        let z_dd = 4.0 * self.dz * (s_dd - 2.0 * s_d * s_d - 2.0 * s * s_dd);
        TaskSample {
            t,
            pose: Pose::from_translation(self.r0 + Vec3::new(self.dx * s, 0.0, z)),
            v_t: DVector::from_vec(vec![self.dx * s_d, z_d]),
            v_t_dot: DVector::from_vec(vec![self.dx * s_dd, z_dd]),
        }
    }

    pub fn samples(&self) -> Vec<TaskSample> {
        (0..self.n_samples()).map(|k| self.eval(k as f64 * self.dt)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    IkNested,
    IkCompound,
    InvDyn,
    Singularity,
}

/// Per-limb record of one trajectory sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LimbRecord {
    pub theta: DVector<f64>,
    pub theta_dot: DVector<f64>,
    pub theta_ddot: DVector<f64>,
    pub outer_iterations: usize,
    /// Largest loop-closure count per outer iteration.
    pub inner_iterations: Vec<usize>,
    pub inner_total: usize,
    pub error_x: f64,
    pub error_g: f64,
    /// `√κ(FᵀF) = σ_max(F)/σ_min(F)`.
    pub cond_sqrt_kappa: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub limbs: Vec<LimbRecord>,
    pub u: Option<DVector<f64>>,
    pub energy: Option<Energy>,
    /// Actuator power minus the rate of mechanical energy.
    pub power_residual: Option<f64>,
    pub actuator_power: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub spec: TrajectorySpec,
    pub steps: Vec<StepRecord>,
    /// Set when a sample could not be solved; `steps` holds the samples
    /// before it.
    pub failure: Option<Error>,
}

impl ExperimentReport {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

fn cond_sqrt_kappa(f: &DMatrix<f64>) -> f64 {
    let s = f.singular_values();
    s.max() / s.min()
}

/// Runs a trajectory experiment from the reference configuration `ϑ = 0`.
pub fn run_experiment(pkm: &PkmModel, kind: ExperimentKind, spec: &TrajectorySpec, settings: &IkSettings) -> Result<ExperimentReport, Error> {
    let solver = if kind == ExperimentKind::IkCompound { SolverKind::Compound } else { SolverKind::Nested };
    run_experiment_with(pkm, kind, spec, settings, solver)
}

/// As [`run_experiment`] with an explicit IK scheme.
pub fn run_experiment_with(
    pkm: &PkmModel,
    kind: ExperimentKind,
    spec: &TrajectorySpec,
    settings: &IkSettings,
    solver: SolverKind,
) -> Result<ExperimentReport, Error> {
    spec.validate()?;
    settings.validate()?;
    let dynamics = matches!(kind, ExperimentKind::InvDyn | ExperimentKind::Singularity);
    let mut prev: Option<PkmStep> = None;
    let mut steps = Vec::with_capacity(spec.n_samples());
    for (k, sample) in spec.samples().iter().enumerate() {
        let guess = match &prev {
            Some(p) => warm_start_guess(p, sample.t, settings.warm_start),
            None => pkm.limbs.iter().map(|l| DVector::zeros(l.n_vars())).collect(),
        };
        match record_step(pkm, &guess, sample, settings, solver, dynamics) {
            Ok((rec, step)) => {
                steps.push(rec);
                prev = Some(step);
            }
            Err(e) => return Ok(ExperimentReport { kind, spec: *spec, steps, failure: Some(e.at_step(k)) }),
        }
    }
    Ok(ExperimentReport { kind, spec: *spec, steps, failure: None })
}

fn record_step(
    pkm: &PkmModel,
    cur: &[DVector<f64>],
    sample: &TaskSample,
    settings: &IkSettings,
    solver: SolverKind,
    dynamics: bool,
) -> Result<(StepRecord, PkmStep), Error> {
    let step = pkm_step(pkm, cur, sample, settings, solver)?;
    let limbs: Vec<LimbRecord> = step
        .limbs
        .iter()
        .map(|s| LimbRecord {
            theta: s.ik.theta.clone(),
            theta_dot: s.rates.theta_dot.clone(),
            theta_ddot: s.rates.theta_ddot.clone(),
            outer_iterations: s.ik.outer_iterations,
            inner_iterations: s.ik.inner_max(),
            inner_total: s.ik.inner_total(),
            error_x: s.ik.error_x,
            error_g: s.ik.error_g,
            cond_sqrt_kappa: cond_sqrt_kappa(&s.rates.jacobians.f),
        })
        .collect();
    let mut rec = StepRecord { t: sample.t, limbs, u: None, energy: None, power_residual: None, actuator_power: None };
    if dynamics {
        let (u, _) = inverse_dynamics_step(pkm, &step, &sample.pose, &sample.v_t, &sample.v_t_dot)?;
        let l0 = &pkm.limbs[0];
        let s0 = &step.limbs[0];
        let tk = TreeKinematics::new(l0, &s0.ik.theta);
        let (v, vd) = frame_motion(l0, &tk, &s0.rates.theta_dot, &s0.rates.theta_ddot);
        let pv = l0.platform_var();
        let states: Vec<_> = step.limbs.iter().map(|s| (&s.ik.theta, &s.rates.theta_dot, &s.rates.theta_ddot)).collect();
        let energy = system_energy(pkm, &states, &tk.poses[pv], &v[pv], &vd[pv]);
        let mut power = 0.0;
        let mut i = 0;
        for (acts, s) in pkm.actuators.iter().zip(&step.limbs) {
            for &a in acts {
                power += u[i] * s.rates.theta_dot[a];
                i += 1;
            }
        }
        rec.power_residual = Some(power - energy.total_rate());
        rec.actuator_power = Some(power);
        rec.energy = Some(energy);
        rec.u = Some(u);
    }
    Ok((rec, step))
}
