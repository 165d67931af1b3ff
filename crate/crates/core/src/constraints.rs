//! Cut-joint loop constraints: elementary translation and orientation locks,
//! their velocity and acceleration forms, per-loop assembly, and the
//! orthogonal complement `H` with its time derivative.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SMatrix};

use crate::error::Error;
use crate::kinematics::TreeKinematics;
use crate::model::{Closure, CycleModel, CutJointSpec, LimbModel};
use crate::se3::{angular, skew, Mat3, Pose, Vec3, Vec6};

/// Reciprocal condition number below which `G_y` counts as singular.
pub const RCOND_MIN: f64 = 1e-12;
/// Relative singular-value tolerance for the rank of redundant constraints.
pub const RANK_TOL: f64 = 1e-9;

type Mat3x12 = SMatrix<f64, 3, 12>;

/// Motion of the two bodies joined by a cut joint, restricted to the loop's
/// variables.
#[derive(Clone, Debug)]
pub struct CutBodies {
    pub pose_k: Pose,
    pub pose_r: Pose,
    pub twist_k: Vec6,
    pub twist_r: Vec6,
    /// `[J_k; J_r]`, 12×n_λ.
    pub jac: DMatrix<f64>,
    /// `[J̇_k; J̇_r]`, 12×n_λ.
    pub jac_dot: DMatrix<f64>,
}

impl CutBodies {
    /// `theta_dot` must be zero outside the loop.
    pub fn new(limb: &LimbModel, tk: &TreeKinematics, cycle: &CycleModel, theta_dot: &DVector<f64>) -> Self {
        let vars = &cycle.cycle.vars;
        let spec = &cycle.cut;
        let mut jac = DMatrix::zeros(12, vars.len());
        let mut jac_dot = DMatrix::zeros(12, vars.len());
        let mut twists = [Vec6::zeros(); 2];
        for (s, body) in [spec.k, spec.r].into_iter().enumerate() {
            let var = limb.graph.body_var(body);
            let jb = tk.frame_jacobian(limb, var);
            let jbd = tk.frame_jacobian_dot(limb, var, theta_dot);
            twists[s] = Vec6::from_column_slice((&jb * theta_dot).as_slice());
            for (c, &v) in vars.iter().enumerate() {
                jac.view_mut((6 * s, c), (6, 1)).copy_from(&jb.column(v));
                jac_dot.view_mut((6 * s, c), (6, 1)).copy_from(&jbd.column(v));
            }
        }
        Self {
            pose_k: tk.body_pose(limb, spec.k),
            pose_r: tk.body_pose(limb, spec.r),
            twist_k: twists[0],
            twist_r: twists[1],
            jac,
            jac_dot,
        }
    }

    fn r_kr(&self) -> Mat3 {
        self.pose_k.rotation.transpose() * self.pose_r.rotation
    }

    fn r_kr_dot(&self) -> Mat3 {
        let r = self.r_kr();
        r * skew(&angular(&self.twist_r)) - skew(&angular(&self.twist_k)) * r
    }
}

/// Displacement of the anchor of `r` from the anchor of `k`, in frame `k`,
/// with the operators `B` and `A = B·[J_k; J_r]` mapping rates to `ḋ`.
#[derive(Clone, Debug)]
pub struct RelativeDisplacement {
    pub d: Vec3,
    pub d_dot: Vec3,
    pub a: DMatrix<f64>,
    pub a_dot: DMatrix<f64>,
    pub b: Mat3x12,
    pub b_dot: Mat3x12,
}

pub fn relative_displacement(spec: &CutJointSpec, cb: &CutBodies) -> RelativeDisplacement {
    let rk = &cb.pose_k.rotation;
    let x_r = cb.pose_r.transform_point(&spec.d_r);
    let p = rk.transpose() * (x_r - cb.pose_k.translation);
    let r_kr = cb.r_kr();
    let r_kr_dot = cb.r_kr_dot();
    let dr = skew(&spec.d_r);

    let mut b = Mat3x12::zeros();
    b.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&p));
    b.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-Mat3::identity()));
    b.fixed_view_mut::<3, 3>(0, 6).copy_from(&(-r_kr * dr));
    b.fixed_view_mut::<3, 3>(0, 9).copy_from(&r_kr);

    let mut v = SMatrix::<f64, 12, 1>::zeros();
    v.fixed_rows_mut::<6>(0).copy_from(&cb.twist_k);
    v.fixed_rows_mut::<6>(6).copy_from(&cb.twist_r);
    let p_dot = b * v;

    let mut b_dot = Mat3x12::zeros();
    b_dot.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&p_dot));
    b_dot.fixed_view_mut::<3, 3>(0, 6).copy_from(&(-r_kr_dot * dr));
    b_dot.fixed_view_mut::<3, 3>(0, 9).copy_from(&r_kr_dot);

    let bd = DMatrix::from_column_slice(3, 12, b.as_slice());
    let bdd = DMatrix::from_column_slice(3, 12, b_dot.as_slice());
    let a = &bd * &cb.jac;
    let a_dot = &bdd * &cb.jac + &bd * &cb.jac_dot;
    RelativeDisplacement { d: p - spec.d_k, d_dot: p_dot, a, a_dot, b, b_dot }
}

/// Residuals, Jacobian rows and their time derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintRows {
    pub g: Vec<f64>,
    pub jac: Vec<DMatrix<f64>>,
    pub jac_dot: Vec<DMatrix<f64>>,
}

impl ConstraintRows {
    fn with_capacity(m: usize) -> Self {
        Self { g: Vec::with_capacity(m), jac: Vec::with_capacity(m), jac_dot: Vec::with_capacity(m) }
    }
}

pub fn position_constraint_rows(spec: &CutJointSpec, disp: &RelativeDisplacement) -> ConstraintRows {
    let mut out = ConstraintRows::with_capacity(spec.locks.len());
    for u in &spec.locks {
        let ut = DMatrix::from_row_slice(1, 3, u.as_slice());
        out.g.push(u.dot(&disp.d));
        out.jac.push(&ut * &disp.a);
        out.jac_dot.push(&ut * &disp.a_dot);
    }
    out
}

/// Rows `ᵏu_αᵀ R_{k,r} ʳu_β` of the perpendicularity locks.
pub fn orientation_constraint_rows(spec: &CutJointSpec, cb: &CutBodies) -> ConstraintRows {
    let r_kr = cb.r_kr();
    let r_kr_dot = cb.r_kr_dot();
    let mut out = ConstraintRows::with_capacity(spec.orientation.len());
    for pair in &spec.orientation {
        let bk = r_kr * pair.on_r;
        let bk_dot = r_kr_dot * pair.on_r;
        let mut brot = SMatrix::<f64, 3, 12>::zeros();
        brot.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&bk));
        brot.fixed_view_mut::<3, 3>(0, 6).copy_from(&(-r_kr * skew(&pair.on_r)));
        let mut brot_dot = SMatrix::<f64, 3, 12>::zeros();
        brot_dot.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&bk_dot));
        brot_dot.fixed_view_mut::<3, 3>(0, 6).copy_from(&(-r_kr_dot * skew(&pair.on_r)));
        let row = pair.on_k.transpose() * brot;
        let row_dot = pair.on_k.transpose() * brot_dot;
        let row = DMatrix::from_row_slice(1, 12, row.as_slice());
        let row_dot = DMatrix::from_row_slice(1, 12, row_dot.as_slice());
        out.g.push(pair.on_k.dot(&bk));
        out.jac.push(&row * &cb.jac);
        out.jac_dot.push(&row_dot * &cb.jac + &row * &cb.jac_dot);
    }
    out
}

/// The rate-dependent orientation operator `B̄` whose product with the
/// stacked twist equals `Ḃ^rot` times the same twist.
pub fn orientation_b_bar(pair_on_r: &Vec3, cb: &CutBodies) -> SMatrix<f64, 3, 12> {
    let r_kr = cb.r_kr();
    let bk = skew(&(r_kr * pair_on_r));
    let wk = skew(&angular(&cb.twist_k));
    let wr = skew(&(r_kr * angular(&cb.twist_r)));
    let mut m = SMatrix::<f64, 3, 12>::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-(wk * bk)));
    m.fixed_view_mut::<3, 3>(0, 6).copy_from(&(-((wr - wk * 2.0) * bk * r_kr)));
    m
}

/// Constraint residual `g`, Jacobian `G` and its derivative `Ġ` of one loop,
/// with columns ordered as the loop's variables.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintEval {
    pub g: DVector<f64>,
    pub jac: DMatrix<f64>,
    pub jac_dot: DMatrix<f64>,
    /// `Ġϑ̇` for the loop rates.
    pub bias: DVector<f64>,
}

/// Limb rates with every component outside `cycle` set to zero.
pub fn cycle_local_rates(cycle: &CycleModel, theta_dot: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(theta_dot.len());
    for &v in &cycle.cycle.vars {
        out[v] = theta_dot[v];
    }
    out
}

/// Evaluates loop `index` for the limb state. Only the loop's components of
/// `theta_dot` are used.
pub fn assemble_cycle_constraints(
    limb: &LimbModel,
    index: usize,
    theta: &DVector<f64>,
    theta_dot: &DVector<f64>,
) -> Result<ConstraintEval, Error> {
    let cycle = limb.cycles.get(index).ok_or(Error::InvalidInput("no such loop"))?;
    for v in [theta, theta_dot] {
        if v.len() != limb.n_vars() {
            return Err(Error::DimensionMismatch { expected: limb.n_vars(), found: v.len() });
        }
    }
    let tk = TreeKinematics::new(limb, theta);
    Ok(cycle_constraints(limb, &tk, cycle, theta_dot))
}

pub(crate) fn cycle_constraints(
    limb: &LimbModel,
    tk: &TreeKinematics,
    cycle: &CycleModel,
    theta_dot: &DVector<f64>,
) -> ConstraintEval {
    let local = cycle_local_rates(cycle, theta_dot);
    let cb = CutBodies::new(limb, tk, cycle, &local);
    let disp = relative_displacement(&cycle.cut, &cb);
    let pos = position_constraint_rows(&cycle.cut, &disp);
    let rot = orientation_constraint_rows(&cycle.cut, &cb);
    let n = cycle.n_vars();
    let m = cycle.n_constraints();
    let mut jac = DMatrix::zeros(m, n);
    let mut jac_dot = DMatrix::zeros(m, n);
    let mut g = DVector::zeros(m);
    for (i, ((gi, row), row_dot)) in
        pos.g.iter().chain(&rot.g).zip(pos.jac.iter().chain(&rot.jac)).zip(pos.jac_dot.iter().chain(&rot.jac_dot)).enumerate()
    {
        g[i] = *gi;
        jac.row_mut(i).copy_from(&row.row(0));
        jac_dot.row_mut(i).copy_from(&row_dot.row(0));
    }
    let qd = DVector::from_iterator(n, cycle.cycle.vars.iter().map(|&v| local[v]));
    let bias = &jac_dot * qd;
    ConstraintEval { g, jac, jac_dot, bias }
}

fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])])
}

/// Pseudo-inverse of the dependent block `G_y` of a loop.
#[derive(Clone, Debug)]
pub struct DependentBlock {
    pub pinv: DMatrix<f64>,
    /// `σ_min / σ_max` of `G_y`.
    pub rcond: f64,
}

impl DependentBlock {
    pub fn new(cycle: &CycleModel, jac: &DMatrix<f64>) -> Result<Self, Error> {
        let gy = select_columns(jac, &cycle.partition.dependent);
        if gy.ncols() == 0 {
            return Ok(Self { pinv: DMatrix::zeros(0, gy.nrows()), rcond: 1.0 });
        }
        let svd = gy.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
        let tol = if cycle.overconstrained { RANK_TOL } else { RCOND_MIN };
        if rcond.is_nan() || rcond < tol {
            return Err(Error::SingularGy { cycle: cycle.cycle.index, rcond });
        }
        let pinv = svd.pseudo_inverse(0.0).map_err(|_| Error::SingularGy { cycle: cycle.cycle.index, rcond })?;
        Ok(Self { pinv, rcond })
    }

    /// `−G_y⁺ v`.
    pub fn solve_neg(&self, v: &DVector<f64>) -> DVector<f64> {
        -(&self.pinv * v)
    }
}

/// Reciprocal condition number of the loop's dependent block.
pub fn gy_rcond(cycle: &CycleModel, eval: &ConstraintEval) -> f64 {
    let gy = select_columns(&eval.jac, &cycle.partition.dependent);
    if gy.ncols() == 0 {
        return 1.0;
    }
    let s = gy.singular_values();
    if s.max() > 0.0 {
        s.min() / s.max()
    } else {
        0.0
    }
}

fn scatter_h(cycle: &CycleModel, hy: &DMatrix<f64>, identity: bool) -> DMatrix<f64> {
    let p = &cycle.partition;
    let mut h = DMatrix::zeros(cycle.n_vars(), p.independent.len());
    for (r, &y) in p.dependent.iter().enumerate() {
        h.row_mut(y).copy_from(&hy.row(r));
    }
    if identity {
        for (c, &q) in p.independent.iter().enumerate() {
            h[(q, c)] = 1.0;
        }
    }
    h
}

/// `H = [−G_y⁻¹G_q; I]` in loop-variable order. For a loop declared
/// overconstrained `G_y` is tall with full column rank and its pseudo-inverse
/// is used.
pub fn solve_h(cycle: &CycleModel, eval: &ConstraintEval) -> Result<DMatrix<f64>, Error> {
    if let Closure::Explicit(h) = &cycle.closure {
        return Ok(h.clone());
    }
    let blk = DependentBlock::new(cycle, &eval.jac)?;
    let gq = select_columns(&eval.jac, &cycle.partition.independent);
    let hy = -(&blk.pinv * gq);
    Ok(scatter_h(cycle, &hy, true))
}

/// `Ḣ` with rows `−G_y⁻¹ Ġ H` at `y` and zeros at `q`.
pub fn solve_h_dot(cycle: &CycleModel, eval: &ConstraintEval, h: &DMatrix<f64>) -> Result<DMatrix<f64>, Error> {
    if let Closure::Explicit(h) = &cycle.closure {
        return Ok(DMatrix::zeros(h.nrows(), h.ncols()));
    }
    let blk = DependentBlock::new(cycle, &eval.jac)?;
    let hy = -(&blk.pinv * (&eval.jac_dot * h));
    Ok(scatter_h(cycle, &hy, false))
}

/// Solution of one loop at a limb state.
#[derive(Clone, Debug)]
pub struct CycleSolution {
    pub eval: ConstraintEval,
    pub h: DMatrix<f64>,
    pub h_dot: DMatrix<f64>,
}

/// Loop solutions and the limb-level `H_(l)`, `Ḣ_(l)` (n_l×δ_l, columns in
/// the order of [`LimbModel::q_vars`]).
#[derive(Clone, Debug)]
pub struct LimbConstraintSolution {
    pub cycles: Vec<CycleSolution>,
    pub h: DMatrix<f64>,
    pub h_dot: DMatrix<f64>,
}

pub fn solve_cycle(
    limb: &LimbModel,
    tk: &TreeKinematics,
    index: usize,
    theta_dot: &DVector<f64>,
) -> Result<CycleSolution, Error> {
    let cycle = &limb.cycles[index];
    let eval = cycle_constraints(limb, tk, cycle, theta_dot);
    let h = solve_h(cycle, &eval).map_err(|e| e.in_cycle(index))?;
    let h_dot = solve_h_dot(cycle, &eval, &h).map_err(|e| e.in_cycle(index))?;
    Ok(CycleSolution { eval, h, h_dot })
}

pub fn assemble_limb_h(limb: &LimbModel, cycles: &[CycleSolution]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = limb.n_vars();
    let q = limb.q_vars();
    let mut h = DMatrix::zeros(n, q.len());
    let mut hd = DMatrix::zeros(n, q.len());
    for (c, &v) in q.iter().enumerate() {
        if !limb.cycles.iter().any(|cy| cy.cycle.vars.contains(&v)) {
            h[(v, c)] = 1.0;
        }
    }
    for (cy, sol) in limb.cycles.iter().zip(cycles) {
        for (lc, &iv) in cy.independent_vars().iter().enumerate() {
            let col = q.iter().position(|&x| x == iv).expect("independent variable is a limb coordinate");
            for (lr, &v) in cy.cycle.vars.iter().enumerate() {
                h[(v, col)] = sol.h[(lr, lc)];
                hd[(v, col)] = sol.h_dot[(lr, lc)];
            }
        }
    }
    (h, hd)
}

pub fn limb_constraint_solution(
    limb: &LimbModel,
    theta: &DVector<f64>,
    theta_dot: &DVector<f64>,
) -> Result<LimbConstraintSolution, Error> {
    let tk = TreeKinematics::new(limb, theta);
    limb_constraint_solution_at(limb, &tk, theta_dot)
}

pub(crate) fn limb_constraint_solution_at(
    limb: &LimbModel,
    tk: &TreeKinematics,
    theta_dot: &DVector<f64>,
) -> Result<LimbConstraintSolution, Error> {
    let cycles = (0..limb.cycles.len()).map(|i| solve_cycle(limb, tk, i, theta_dot)).collect::<Result<Vec<_>, _>>()?;
    let (h, h_dot) = assemble_limb_h(limb, &cycles);
    Ok(LimbConstraintSolution { cycles, h, h_dot })
}
