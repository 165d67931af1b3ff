//! Limb and manipulator models: topology, joint screws, reference frames,
//! loop-closure specifications and task-space selection matrices.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::Error;
use crate::se3::{adjoint_inv, Mat6, Pose, Vec3, Vec6};
use crate::topology::{FundamentalCycle, JointKind, LimbGraph};

/// Per-variable joint frame data.
#[derive(Clone, Debug, PartialEq)]
pub struct JointFrame {
    /// Screw in the inertial frame at the zero reference.
    pub y: Vec6,
    /// Screw in the frame of the moved body.
    pub x: Vec6,
    /// Reference pose of the frame moved by this variable.
    pub a: Pose,
    /// Reference pose relative to the parent variable's frame.
    pub b: Pose,
}

/// Perpendicularity constraint between a vector fixed on body `k` and one
/// fixed on body `r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientationPair {
    pub on_k: Vec3,
    pub on_r: Vec3,
}

/// Geometry of a cut joint between bodies `k` and `r`.
///
/// Each translation lock constrains the displacement of the anchor point of
/// `r` relative to the anchor point of `k` along a direction fixed on `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct CutJointSpec {
    pub k: usize,
    pub r: usize,
    pub d_k: Vec3,
    pub d_r: Vec3,
    pub locks: Vec<Vec3>,
    pub orientation: Vec<OrientationPair>,
}

impl CutJointSpec {
    pub fn n_constraints(&self) -> usize {
        self.locks.len() + self.orientation.len()
    }

    fn validate(&self) -> Result<(), Error> {
        let unit = |v: &Vec3| (v.norm() - 1.0).abs() <= 1e-12;
        if !self.locks.iter().all(unit) || !self.orientation.iter().all(|o| unit(&o.on_k) && unit(&o.on_r)) {
            return Err(Error::InvalidInput("cut-joint directions must be unit vectors"));
        }
        Ok(())
    }
}

/// Split of a cycle's variables (cycle-local indices) into dependent `y`
/// and independent `q` coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub dependent: Vec<usize>,
    pub independent: Vec<usize>,
}

/// How a cycle's closure is resolved.
#[derive(Clone, Debug, PartialEq)]
pub enum Closure {
    /// Numerically, from the cut-joint constraints.
    CutJoint,
    /// Exactly, by the linear relation `ϑ_λ = H q_λ` with constant `H`.
    Explicit(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleModel {
    pub cycle: FundamentalCycle,
    pub cut: CutJointSpec,
    pub partition: Partition,
    pub closure: Closure,
    /// The cut-joint constraints are redundant: `G` has rank `|y| < m`.
    pub overconstrained: bool,
}

impl CycleModel {
    pub fn n_vars(&self) -> usize {
        self.cycle.vars.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.cut.n_constraints()
    }

    pub fn dof(&self) -> usize {
        self.partition.independent.len()
    }

    /// Limb indices of the dependent variables.
    pub fn dependent_vars(&self) -> Vec<usize> {
        self.partition.dependent.iter().map(|&i| self.cycle.vars[i]).collect()
    }

    /// Limb indices of the independent variables.
    pub fn independent_vars(&self) -> Vec<usize> {
        self.partition.independent.iter().map(|&i| self.cycle.vars[i]).collect()
    }
}

/// Input description of one loop of a limb.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleDef {
    pub cut: CutJointSpec,
    pub partition: Partition,
    pub closure: Closure,
    pub overconstrained: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimbModel {
    pub graph: LimbGraph,
    pub frames: Vec<JointFrame>,
    /// Reference pose of every body; entry 0 is the ground.
    pub body_ref: Vec<Pose>,
    /// Body-frame mass matrix of every body; entry 0 is unused.
    pub inertia: Vec<Mat6>,
    pub cycles: Vec<CycleModel>,
    pub platform: usize,
    /// Selection of the platform twist components controlled by this limb.
    pub p_t: DMatrix<f64>,
    /// Distribution of the manipulator's task velocity to this limb.
    pub d_t: DMatrix<f64>,
    q_vars: Vec<usize>,
}

impl LimbModel {
    /// Builds a limb from its graph.
    ///
    /// `screws[t]` holds the inertial-frame screws of tree joint `t` (in the
    /// graph's tree-joint order) at the zero reference, one per variable.
    /// `body_ref[k]` is the reference pose of body `k`; `cycles[λ]` matches the
    /// graph's `λ`-th fundamental cycle.
    pub fn new(
        graph: LimbGraph,
        screws: &[Vec<Vec6>],
        body_ref: Vec<Pose>,
        cycles: Vec<CycleDef>,
        platform: usize,
        p_t: DMatrix<f64>,
        d_t: DMatrix<f64>,
    ) -> Result<Self, Error> {
        let nb = graph.body_count();
        if body_ref.len() != nb + 1 {
            return Err(Error::DimensionMismatch { expected: nb + 1, found: body_ref.len() });
        }
        if screws.len() != graph.tree_joints().len() {
            return Err(Error::DimensionMismatch { expected: graph.tree_joints().len(), found: screws.len() });
        }
        if platform == 0 || platform > nb {
            return Err(Error::UnknownBody(platform));
        }
        if (0..=nb).any(|b| graph.parent_joint(b).is_some_and(|j| j.parent == platform)) {
            return Err(Error::InvalidInput("the platform must be a leaf of the spanning tree"));
        }
        if p_t.ncols() != 6 || d_t.nrows() != p_t.nrows() {
            return Err(Error::InvalidInput("P_t must have 6 columns and as many rows as D_t"));
        }

        let mut frames = Vec::with_capacity(graph.n_vars());
        for (t, j) in graph.tree_joints().iter().enumerate() {
            if screws[t].len() != j.kind.dof() {
                return Err(Error::DimensionMismatch { expected: j.kind.dof(), found: screws[t].len() });
            }
            for (s, y) in screws[t].iter().enumerate() {
                let ang = y.fixed_rows::<3>(0).norm();
                let ok = match j.kind {
                    JointKind::Prismatic => ang == 0.0 && (y.fixed_rows::<3>(3).norm() - 1.0).abs() <= 1e-12,
                    _ => (ang - 1.0).abs() <= 1e-12,
                };
                if !ok {
                    return Err(Error::InvalidInput("joint screw axis is not a unit vector"));
                }
                let a = body_ref[j.child];
                let var = j.var_offset + s;
                let parent_a = graph.var_parent(var).map(|p| body_ref[graph.var_body(p)]).unwrap_or_default();
                frames.push(JointFrame { y: *y, x: adjoint_inv(&a) * y, a, b: parent_a.inverse() * a });
            }
        }

        let gcycles = graph.fundamental_cycles();
        if cycles.len() != gcycles.len() {
            return Err(Error::DimensionMismatch { expected: gcycles.len(), found: cycles.len() });
        }
        let mut cms = Vec::with_capacity(cycles.len());
        for (fc, def) in gcycles.iter().zip(cycles) {
            let mut ends = [def.cut.k, def.cut.r];
            ends.sort_unstable();
            let mut want = fc.bodies;
            want.sort_unstable();
            if ends != want {
                return Err(Error::InvalidInput("cut-joint spec bodies do not match the cut joint"));
            }
            def.cut.validate()?;
            let n = fc.vars.len();
            let mut all: Vec<usize> = def.partition.dependent.iter().chain(&def.partition.independent).copied().collect();
            all.sort_unstable();
            if all != (0..n).collect::<Vec<_>>() {
                return Err(Error::InvalidInput("partition must split the cycle variables"));
            }
            let m = def.cut.n_constraints();
            let ny = def.partition.dependent.len();
            if (!def.overconstrained && ny != m) || (def.overconstrained && ny > m) {
                return Err(Error::InvalidInput("dependent variable count does not match the constraint count"));
            }
            if let Closure::Explicit(h) = &def.closure {
                if h.nrows() != n || h.ncols() != def.partition.independent.len() {
                    return Err(Error::InvalidInput("explicit closure matrix has wrong shape"));
                }
                for (c, &qi) in def.partition.independent.iter().enumerate() {
                    for col in 0..h.ncols() {
                        if h[(qi, col)] != if col == c { 1.0 } else { 0.0 } {
                            return Err(Error::InvalidInput("explicit closure matrix must have identity rows at q"));
                        }
                    }
                }
            }
            cms.push(CycleModel {
                cycle: fc.clone(),
                cut: def.cut,
                partition: def.partition,
                closure: def.closure,
                overconstrained: def.overconstrained,
            });
        }

        let mut q_vars = graph.free_vars();
        for c in &cms {
            q_vars.extend(c.independent_vars());
        }
        let inertia = alloc::vec![Mat6::zeros(); nb + 1];
        Ok(Self { graph, frames, body_ref, inertia, cycles: cms, platform, p_t, d_t, q_vars })
    }

    pub fn with_inertia(mut self, inertia: Vec<Mat6>) -> Result<Self, Error> {
        if inertia.len() != self.graph.body_count() + 1 {
            return Err(Error::DimensionMismatch { expected: self.graph.body_count() + 1, found: inertia.len() });
        }
        self.inertia = inertia;
        Ok(self)
    }

    pub fn n_vars(&self) -> usize {
        self.graph.n_vars()
    }

    /// Limb variable indices of the independent coordinates `q`, free
    /// variables first, then each cycle's independent variables.
    pub fn q_vars(&self) -> &[usize] {
        &self.q_vars
    }

    pub fn dof(&self) -> usize {
        self.q_vars.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.cycles.iter().map(|c| c.n_constraints()).sum()
    }

    pub fn platform_var(&self) -> usize {
        self.graph.body_var(self.platform).expect("platform is not the ground")
    }

    /// Variables of the tree without the platform and its connecting joint.
    pub fn dynamics_vars(&self) -> Vec<usize> {
        let j = self.graph.parent_joint(self.platform).expect("platform has a joint");
        (0..self.n_vars()).filter(|v| *v < j.var_offset || *v >= j.var_offset + j.kind.dof()).collect()
    }

    /// Frame variable carrying the mass of each body with nonzero inertia.
    pub fn massive_frames(&self) -> Vec<(usize, usize)> {
        (1..=self.graph.body_count())
            .filter(|&b| b != self.platform)
            .filter_map(|b| self.graph.body_var(b).map(|v| (b, v)))
            .collect()
    }
}

/// A parallel manipulator: limbs sharing one platform.
#[derive(Clone, Debug, PartialEq)]
pub struct PkmModel {
    pub limbs: Vec<LimbModel>,
    /// Actuated limb variables, per limb.
    pub actuators: Vec<Vec<usize>>,
    /// Map from task velocity `V_t` to the platform twist.
    pub p_p: DMatrix<f64>,
    pub platform_ref: Pose,
    pub platform_inertia: Mat6,
    /// Gravitational acceleration in the inertial frame.
    pub gravity: Vec3,
}

impl PkmModel {
    pub fn new(
        limbs: Vec<LimbModel>,
        actuators: Vec<Vec<usize>>,
        p_p: DMatrix<f64>,
        platform_inertia: Mat6,
        gravity: Vec3,
    ) -> Result<Self, Error> {
        let first = limbs.first().ok_or(Error::InvalidInput("a manipulator needs at least one limb"))?;
        let platform_ref = first.body_ref[first.platform];
        let dp = p_p.ncols();
        if p_p.nrows() != 6 {
            return Err(Error::InvalidInput("P_p must have 6 rows"));
        }
        if actuators.len() != limbs.len() {
            return Err(Error::DimensionMismatch { expected: limbs.len(), found: actuators.len() });
        }
        for (l, acts) in limbs.iter().zip(&actuators) {
            let ref_p = l.body_ref[l.platform];
            if (ref_p.rotation - platform_ref.rotation).abs().max() > 1e-12
                || (ref_p.translation - platform_ref.translation).norm() > 1e-12
            {
                return Err(Error::InvalidInput("limbs disagree on the platform reference pose"));
            }
            if l.d_t.ncols() != dp {
                return Err(Error::InvalidInput("D_t must have one column per task coordinate"));
            }
            if l.p_t.nrows() != l.dof() {
                return Err(Error::InvalidInput("limbs must be non-redundant (platform coordinates = limb DOF)"));
            }
            if !acts.iter().all(|a| l.q_vars().contains(a)) {
                return Err(Error::InvalidInput("actuated variables must be independent coordinates"));
            }
        }
        let n_act: usize = actuators.iter().map(|a| a.len()).sum();
        if n_act != dp {
            return Err(Error::InvalidInput("number of actuators must equal the platform DOF"));
        }
        Ok(Self { limbs, actuators, p_p, platform_ref, platform_inertia, gravity })
    }

    pub fn task_dof(&self) -> usize {
        self.p_p.ncols()
    }
}
