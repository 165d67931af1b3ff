//! JSON description of a manipulator model.
//!
//! Matrices are stored row by row. Poses carry a row-major rotation and a
//! translation. Joint screws are `(ω; v)` in the inertial frame at the zero
//! reference, one per joint variable; cut joints carry none.

use std::path::Path;

use nalgebra::{DMatrix, Matrix3, Vector3};
use pkm_core::model::{Closure, CutJointSpec, CycleDef, OrientationPair, Partition};
use pkm_core::se3::{Mat6, Vec6};
use pkm_core::topology::{build_limb_graph, JointDef, JointKind};
use pkm_core::{LimbModel, PkmModel, Pose};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub limbs: Vec<LimbFile>,
    /// Actuated variables of each limb.
    pub actuators: Vec<Vec<usize>>,
    /// Task velocity to platform twist, 6 rows.
    pub p_p: Vec<Vec<f64>>,
    pub platform_inertia: [[f64; 6]; 6],
    pub gravity: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimbFile {
    /// Number of moving bodies; body 0 is the ground.
    pub bodies: usize,
    pub joints: Vec<JointFile>,
    /// Ids of the cut joints, one per loop.
    pub cuts: Vec<usize>,
    /// Reference poses of bodies `0..=bodies`.
    pub body_ref: Vec<PoseFile>,
    pub cycles: Vec<CycleFile>,
    pub platform: usize,
    pub p_t: Vec<Vec<f64>>,
    pub d_t: Vec<Vec<f64>>,
    /// Body-frame mass matrices of bodies `0..=bodies`; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<Vec<[[f64; 6]; 6]>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKindFile {
    Revolute,
    Prismatic,
    Universal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointFile {
    pub id: usize,
    pub kind: JointKindFile,
    pub bodies: [usize; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub screws: Vec<[f64; 6]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFile {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleFile {
    pub cut: CutFile,
    /// Loop-local indices of the dependent and independent variables.
    pub dependent: Vec<usize>,
    pub independent: Vec<usize>,
    /// Constant closure matrix `H` (rows per loop variable); the loop is
    /// closed through the cut-joint constraints when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closure: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub overconstrained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutFile {
    pub k: usize,
    pub r: usize,
    pub d_k: [f64; 3],
    pub d_r: [f64; 3],
    pub locks: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub orientation: Vec<OrientationFile>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientationFile {
    pub on_k: [f64; 3],
    pub on_r: [f64; 3],
}

fn model_err(msg: impl Into<String>) -> CliError {
    CliError::Model(msg.into())
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(model_err(format!("{what}: rows have different lengths")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if !flat.iter().all(|x| x.is_finite()) {
        return Err(model_err(format!("{what}: non-finite entry")));
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn mat6(a: &[[f64; 6]; 6]) -> Mat6 {
    Mat6::from_fn(|r, c| a[r][c])
}

fn mat6_rows(m: &Mat6) -> [[f64; 6]; 6] {
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

fn pose(p: &PoseFile) -> Result<Pose, CliError> {
    let r = Matrix3::from_fn(|i, j| p.rotation[i][j]);
    let t = Vector3::from(p.translation);
    if !r.iter().chain(t.iter()).all(|x| x.is_finite()) {
        return Err(model_err("pose: non-finite entry"));
    }
    if (r.transpose() * r - Matrix3::identity()).amax() > 1e-9 || r.determinant() <= 0.0 {
        return Err(model_err("pose: rotation is not orthonormal"));
    }
    Ok(Pose::new(r, t))
}

fn pose_file(p: &Pose) -> PoseFile {
    PoseFile {
        rotation: std::array::from_fn(|i| std::array::from_fn(|j| p.rotation[(i, j)])),
        translation: p.translation.into(),
    }
}

fn kind(k: JointKindFile) -> JointKind {
    match k {
        JointKindFile::Revolute => JointKind::Revolute,
        JointKindFile::Prismatic => JointKind::Prismatic,
        JointKindFile::Universal => JointKind::Universal,
    }
}

fn kind_file(k: JointKind) -> JointKindFile {
    match k {
        JointKind::Revolute => JointKindFile::Revolute,
        JointKind::Prismatic => JointKindFile::Prismatic,
        JointKind::Universal => JointKindFile::Universal,
    }
}

impl LimbFile {
    pub fn to_limb(&self) -> Result<LimbModel, CliError> {
        let defs: Vec<JointDef> = self.joints.iter().map(|j| JointDef::new(j.id, kind(j.kind), j.bodies[0], j.bodies[1])).collect();
        let graph = build_limb_graph(self.bodies, &defs, &self.cuts).map_err(|e| model_err(e.to_string()))?;
        let mut screws = Vec::new();
        for tj in graph.tree_joints() {
            let j = self.joints.iter().find(|j| j.id == tj.id).expect("tree joints come from the joint list");
            screws.push(j.screws.iter().map(|s| Vec6::from_column_slice(s)).collect::<Vec<_>>());
        }
        let body_ref = self.body_ref.iter().map(pose).collect::<Result<Vec<_>, _>>()?;
        let mut cycles = Vec::with_capacity(self.cycles.len());
        for c in &self.cycles {
            let v3 = |a: &[f64; 3]| Vector3::from(*a);
            cycles.push(CycleDef {
                cut: CutJointSpec {
                    k: c.cut.k,
                    r: c.cut.r,
                    d_k: v3(&c.cut.d_k),
                    d_r: v3(&c.cut.d_r),
                    locks: c.cut.locks.iter().map(v3).collect(),
                    orientation: c.cut.orientation.iter().map(|o| OrientationPair { on_k: v3(&o.on_k), on_r: v3(&o.on_r) }).collect(),
                },
                partition: Partition { dependent: c.dependent.clone(), independent: c.independent.clone() },
                closure: match &c.closure {
                    Some(h) => Closure::Explicit(matrix(h, "closure")?),
                    None => Closure::CutJoint,
                },
                overconstrained: c.overconstrained,
            });
        }
        let limb = LimbModel::new(graph, &screws, body_ref, cycles, self.platform, matrix(&self.p_t, "p_t")?, matrix(&self.d_t, "d_t")?)
            .map_err(|e| model_err(e.to_string()))?;
        match &self.inertia {
            Some(m) => limb.with_inertia(m.iter().map(mat6).collect()).map_err(|e| model_err(e.to_string())),
            None => Ok(limb),
        }
    }

    pub fn from_limb(l: &LimbModel) -> Self {
        let mut joints: Vec<JointFile> = l
            .graph
            .tree_joints()
            .iter()
            .map(|j| JointFile {
                id: j.id,
                kind: kind_file(j.kind),
                bodies: [j.parent, j.child],
                screws: (j.var_offset..j.var_offset + j.kind.dof()).map(|v| l.frames[v].y.into()).collect(),
            })
            .chain(l.graph.cut_joints().iter().map(|c| JointFile { id: c.id, kind: kind_file(c.kind), bodies: c.bodies, screws: vec![] }))
            .collect();
        joints.sort_by_key(|j| j.id);
        let a3 = |v: &Vector3<f64>| -> [f64; 3] { (*v).into() };
        Self {
            bodies: l.graph.body_count(),
            joints,
            cuts: l.graph.cut_joints().iter().map(|c| c.id).collect(),
            body_ref: l.body_ref.iter().map(pose_file).collect(),
            cycles: l
                .cycles
                .iter()
                .map(|c| CycleFile {
                    cut: CutFile {
                        k: c.cut.k,
                        r: c.cut.r,
                        d_k: a3(&c.cut.d_k),
                        d_r: a3(&c.cut.d_r),
                        locks: c.cut.locks.iter().map(a3).collect(),
                        orientation: c.cut.orientation.iter().map(|o| OrientationFile { on_k: a3(&o.on_k), on_r: a3(&o.on_r) }).collect(),
                    },
                    dependent: c.partition.dependent.clone(),
                    independent: c.partition.independent.clone(),
                    closure: match &c.closure {
                        Closure::Explicit(h) => Some(rows(h)),
                        Closure::CutJoint => None,
                    },
                    overconstrained: c.overconstrained,
                })
                .collect(),
            platform: l.platform,
            p_t: rows(&l.p_t),
            d_t: rows(&l.d_t),
            inertia: Some(l.inertia.iter().map(mat6_rows).collect()),
        }
    }
}

impl ModelFile {
    pub fn to_model(&self) -> Result<PkmModel, CliError> {
        let limbs = self
            .limbs
            .iter()
            .enumerate()
            .map(|(i, l)| l.to_limb().map_err(|e| model_err(format!("limb {}: {e}", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        let g = Vector3::from(self.gravity);
        if !g.iter().all(|x| x.is_finite()) {
            return Err(model_err("gravity: non-finite entry"));
        }
        PkmModel::new(limbs, self.actuators.clone(), matrix(&self.p_p, "p_p")?, mat6(&self.platform_inertia), g)
            .map_err(|e| model_err(e.to_string()))
    }

    pub fn from_model(m: &PkmModel) -> Self {
        Self {
            limbs: m.limbs.iter().map(LimbFile::from_limb).collect(),
            actuators: m.actuators.clone(),
            p_p: rows(&m.p_p),
            platform_inertia: mat6_rows(&m.platform_inertia),
            gravity: m.gravity.into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| model_err(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| model_err(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files always serialize")
    }
}
