//! Limb topology: spanning tree, cut joints and fundamental cycles.
//!
//! Bodies are numbered `1..=body_count`, the ground is body `0`. Every tree
//! joint is oriented from the ground outwards, and canonical numbering
//! requires the parent body of each tree joint to carry a smaller index than
//! its child. Tree-joint variables are numbered in joint order; a universal
//! joint contributes two consecutive variables.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
    Universal,
}

impl JointKind {
    pub fn dof(self) -> usize {
        match self {
            JointKind::Revolute | JointKind::Prismatic => 1,
            JointKind::Universal => 2,
        }
    }
}

/// Joint as supplied by the caller: an undirected edge between two bodies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JointDef {
    pub id: usize,
    pub kind: JointKind,
    pub bodies: [usize; 2],
}

impl JointDef {
    pub fn new(id: usize, kind: JointKind, a: usize, b: usize) -> Self {
        Self { id, kind, bodies: [a, b] }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeJoint {
    pub id: usize,
    pub kind: JointKind,
    pub parent: usize,
    pub child: usize,
    /// Index of the joint's first variable in the limb's `ϑ`.
    pub var_offset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CutJoint {
    pub id: usize,
    pub kind: JointKind,
    pub bodies: [usize; 2],
}

/// One loop of the limb, closed by a cut joint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FundamentalCycle {
    /// Position of the cycle in the limb, starting at 0.
    pub index: usize,
    pub cut_joint: usize,
    pub bodies: [usize; 2],
    /// Ids of the tree joints on the tree path between the cut joint's bodies.
    pub joints: Vec<usize>,
    /// Limb variable indices of those joints, ascending.
    pub vars: Vec<usize>,
}

impl FundamentalCycle {
    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LimbGraph {
    body_count: usize,
    tree: Vec<TreeJoint>,
    cuts: Vec<CutJoint>,
    /// Tree-joint index driving each body; `None` for the ground.
    parent_joint: Vec<Option<usize>>,
    /// Tree-joint index owning each variable.
    var_joint: Vec<usize>,
    /// Parent variable of each variable; `None` when attached to the ground.
    var_parent: Vec<Option<usize>>,
    cycles: Vec<FundamentalCycle>,
}

/// Validates the joint list and builds the spanning tree and its cycles.
pub fn build_limb_graph(body_count: usize, joints: &[JointDef], cut_ids: &[usize]) -> Result<LimbGraph, Error> {
    for (i, j) in joints.iter().enumerate() {
        for &b in &j.bodies {
            if b > body_count {
                return Err(Error::UnknownBody(b));
            }
        }
        if j.bodies[0] == j.bodies[1] {
            return Err(Error::InvalidInput("joint connects a body to itself"));
        }
        if joints[..i].iter().any(|o| o.id == j.id) {
            return Err(Error::InvalidInput("duplicate joint id"));
        }
    }
    for &c in cut_ids {
        if !joints.iter().any(|j| j.id == c) {
            return Err(Error::UnknownJoint(c));
        }
    }
    for b in 1..=body_count {
        if !joints.iter().any(|j| j.bodies.contains(&b)) {
            return Err(Error::DanglingBody(b));
        }
    }

    let tree_defs: Vec<&JointDef> = joints.iter().filter(|j| !cut_ids.contains(&j.id)).collect();
    if tree_defs.len() != body_count {
        return Err(Error::NotATree);
    }

    // Orient the tree from the ground by breadth-first search.
    let mut parent_of: Vec<Option<(usize, usize)>> = vec![None; body_count + 1];
    let mut seen = vec![false; body_count + 1];
    seen[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(b) = queue.pop_front() {
        for (ti, j) in tree_defs.iter().enumerate() {
            let other = if j.bodies[0] == b {
                j.bodies[1]
            } else if j.bodies[1] == b {
                j.bodies[0]
            } else {
                continue;
            };
            if seen[other] {
                if parent_of[b].map(|p| p.1) != Some(ti) {
                    return Err(Error::NotATree);
                }
                continue;
            }
            seen[other] = true;
            parent_of[other] = Some((b, ti));
            queue.push_back(other);
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::NotATree);
    }

    let mut tree = Vec::with_capacity(body_count);
    let mut parent_joint = vec![None; body_count + 1];
    let mut offset = 0;
    for (ti, j) in tree_defs.iter().enumerate() {
        let child = if parent_of[j.bodies[0]].map(|p| p.1) == Some(ti) { j.bodies[0] } else { j.bodies[1] };
        let parent = parent_of[child].map(|p| p.0).unwrap_or(0);
        if parent >= child && parent != 0 || child == 0 {
            return Err(Error::NonCanonicalOrder { joint: j.id, parent, child });
        }
        parent_joint[child] = Some(tree.len());
        tree.push(TreeJoint { id: j.id, kind: j.kind, parent, child, var_offset: offset });
        offset += j.kind.dof();
    }

    let mut var_joint = Vec::with_capacity(offset);
    let mut var_parent = Vec::with_capacity(offset);
    for (ti, j) in tree.iter().enumerate() {
        let parent_last = parent_joint[j.parent].map(|pj: usize| tree[pj].var_offset + tree[pj].kind.dof() - 1);
        for s in 0..j.kind.dof() {
            var_joint.push(ti);
            let p = if s == 0 { parent_last } else { Some(j.var_offset + s - 1) };
            if let Some(p) = p {
                if p >= j.var_offset + s {
                    return Err(Error::NonCanonicalOrder { joint: j.id, parent: j.parent, child: j.child });
                }
            }
            var_parent.push(p);
        }
    }

    let cuts: Vec<CutJoint> = cut_ids
        .iter()
        .map(|c| {
            let j = joints.iter().find(|j| j.id == *c).expect("validated above");
            CutJoint { id: j.id, kind: j.kind, bodies: j.bodies }
        })
        .collect();

    let mut graph = LimbGraph { body_count, tree, cuts, parent_joint, var_joint, var_parent, cycles: Vec::new() };

    let mut used: Vec<usize> = Vec::new();
    let mut cycles = Vec::with_capacity(graph.cuts.len());
    for (index, cut) in graph.cuts.iter().enumerate() {
        let pa = graph.path_joint_indices(cut.bodies[0]);
        let pb = graph.path_joint_indices(cut.bodies[1]);
        let mut idx: Vec<usize> = pa.iter().filter(|t| !pb.contains(t)).chain(pb.iter().filter(|t| !pa.contains(t))).copied().collect();
        idx.sort_unstable();
        for &t in &idx {
            if used.contains(&t) {
                return Err(Error::NotHybrid { joint: graph.tree[t].id });
            }
        }
        used.extend_from_slice(&idx);
        let vars = idx.iter().flat_map(|&t| graph.tree[t].var_offset..graph.tree[t].var_offset + graph.tree[t].kind.dof()).collect();
        cycles.push(FundamentalCycle {
            index,
            cut_joint: cut.id,
            bodies: cut.bodies,
            joints: idx.iter().map(|&t| graph.tree[t].id).collect(),
            vars,
        });
    }
    graph.cycles = cycles;
    Ok(graph)
}

impl LimbGraph {
    pub fn body_count(&self) -> usize {
        self.body_count
    }

    pub fn n_vars(&self) -> usize {
        self.var_joint.len()
    }

    pub fn tree_joints(&self) -> &[TreeJoint] {
        &self.tree
    }

    pub fn cut_joints(&self) -> &[CutJoint] {
        &self.cuts
    }

    pub fn fundamental_cycles(&self) -> &[FundamentalCycle] {
        &self.cycles
    }

    pub fn tree_joint(&self, id: usize) -> Result<&TreeJoint, Error> {
        self.tree.iter().find(|j| j.id == id).ok_or(Error::UnknownJoint(id))
    }

    /// Tree joint driving `body`.
    pub fn parent_joint(&self, body: usize) -> Option<&TreeJoint> {
        self.parent_joint.get(body).copied().flatten().map(|t| &self.tree[t])
    }

    /// Variable whose frame coincides with `body`: the last variable of the
    /// joint that drives it. `None` for the ground.
    pub fn body_var(&self, body: usize) -> Option<usize> {
        self.parent_joint(body).map(|j| j.var_offset + j.kind.dof() - 1)
    }

    pub fn var_parent(&self, var: usize) -> Option<usize> {
        self.var_parent[var]
    }

    pub fn var_joint(&self, var: usize) -> &TreeJoint {
        &self.tree[self.var_joint[var]]
    }

    /// Body moved by variable `var` (for the first axis of a universal joint
    /// this is the joint's child body as well).
    pub fn var_body(&self, var: usize) -> usize {
        self.var_joint(var).child
    }

    /// `j ⪯ i`: variable `j` lies on the path from the ground to variable `i`.
    pub fn var_precedes(&self, j: usize, i: usize) -> bool {
        let mut cur = Some(i);
        while let Some(c) = cur {
            if c == j {
                return true;
            }
            if c < j {
                return false;
            }
            cur = self.var_parent[c];
        }
        false
    }

    /// Ground-to-body path of variables driving `body`, ascending.
    pub fn predecessor_vars(&self, body: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.body_var(body);
        while let Some(c) = cur {
            out.push(c);
            cur = self.var_parent[c];
        }
        out.reverse();
        out
    }

    /// Ordered ground-to-body list of bodies on the tree path to `body`
    /// (excluding the ground, including `body`).
    pub fn predecessor_set(&self, body: usize) -> Result<Vec<usize>, Error> {
        if body > self.body_count {
            return Err(Error::UnknownBody(body));
        }
        let mut out = Vec::new();
        let mut b = body;
        while b != 0 {
            out.push(b);
            b = self.parent_joint(b).map(|j| j.parent).unwrap_or(0);
        }
        out.reverse();
        Ok(out)
    }

    /// Ids of the tree joints driving `body`, from the ground outwards.
    pub fn driving_joints(&self, body: usize) -> Result<Vec<usize>, Error> {
        Ok(self.predecessor_set(body)?.iter().filter_map(|&b| self.parent_joint(b).map(|j| j.id)).collect())
    }

    fn path_joint_indices(&self, body: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut b = body;
        while let Some(t) = self.parent_joint.get(b).copied().flatten() {
            out.push(t);
            b = self.tree[t].parent;
        }
        out
    }

    /// Variables outside every cycle, ascending.
    pub fn free_vars(&self) -> Vec<usize> {
        (0..self.n_vars()).filter(|v| !self.cycles.iter().any(|c| c.vars.contains(v))).collect()
    }
}
