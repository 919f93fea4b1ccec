//! Depth-first branch and bound over LP relaxations, and differentiation
//! through the winning sub-problem.

use std::fmt;

use nalgebra::DVector;

use crate::diff::{gradient, GradientResult, GradientRoute};
use crate::error::{Error, Result};
use crate::lp::{solve_lp_with, Backend, LpSolution, LpStandardForm, LpStatus, RowOrigin};

pub const INT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_NODES: usize = 100_000;
pub const ENUMERATION_LIMIT: usize = 20;
/// Relative slack in the bound test `C_LP ≥ C* − PRUNE_TOL·(1 + |C*|)`.
pub const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MilpProblem {
    pub base: LpStandardForm,
    pub integer_vars: Vec<usize>,
}

impl MilpProblem {
    pub fn new(base: LpStandardForm, mut integer_vars: Vec<usize>) -> Result<Self> {
        integer_vars.sort_unstable();
        integer_vars.dedup();
        for &j in &integer_vars {
            if j >= base.n_vars() {
                return Err(Error::Milp(format!("integer index {j} out of range")));
            }
            if !base.lower[j].is_finite() || !base.upper[j].is_finite() {
                return Err(Error::Milp(format!(
                    "integer variable `{}` needs finite bounds",
                    base.var_names[j]
                )));
            }
        }
        Ok(Self { base, integer_vars })
    }

    pub fn param_dim(&self) -> usize {
        self.base.param_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// z_j ≤ ⌊value⌋
    Down,
    /// z_j ≥ ⌈value⌉
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchRecord {
    pub var: usize,
    pub side: Side,
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchNode {
    pub trail: Vec<BranchRecord>,
}

impl SearchNode {
    pub fn depth(&self) -> usize {
        self.trail.len()
    }

    /// Base bounds tightened by the trail.
    pub fn bounds(&self, base: &LpStandardForm) -> (Vec<f64>, Vec<f64>) {
        let mut lo = base.lower.clone();
        let mut hi = base.upper.clone();
        for r in &self.trail {
            match r.side {
                Side::Down => hi[r.var] = hi[r.var].min(r.bound),
                Side::Up => lo[r.var] = lo[r.var].max(r.bound),
            }
        }
        (lo, hi)
    }

    /// LP(P): the base LP with this node's bounds.
    pub fn lp(&self, base: &LpStandardForm) -> LpStandardForm {
        let (lo, hi) = self.bounds(base);
        base.with_bounds(lo, hi)
    }

    fn child(&self, var: usize, side: Side, bound: f64) -> Self {
        let mut trail = self.trail.clone();
        trail.push(BranchRecord { var, side, bound });
        Self { trail }
    }
}

impl fmt::Display for SearchNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.trail.is_empty() {
            return write!(f, "root");
        }
        let parts: Vec<String> = self
            .trail
            .iter()
            .map(|r| match r.side {
                Side::Down => format!("z{}<={}", r.var, r.bound),
                Side::Up => format!("z{}>={}", r.var, r.bound),
            })
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Which child of a branched node is explored first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChildOrder {
    #[default]
    DownFirst,
    UpFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchOptions {
    pub int_tol: f64,
    pub max_nodes: usize,
    pub child_order: ChildOrder,
    pub backend: Backend,
    pub record_log: bool,
    /// Round zero-cost integer variables of a node solution when that gives
    /// another optimal KKT point of the same relaxation.
    pub polish: bool,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            int_tol: INT_TOL,
            max_nodes: DEFAULT_MAX_NODES,
            child_order: ChildOrder::DownFirst,
            backend: Backend::Auto,
            record_log: false,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeAction {
    Infeasible,
    Pruned,
    Incumbent,
    Branched(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeLogEntry {
    pub node: SearchNode,
    /// LP relaxation value (+∞ when infeasible).
    pub bound: f64,
    pub action: NodeAction,
}

impl fmt::Display for NodeLogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let action = match self.action {
            NodeAction::Infeasible => "infeasible".to_string(),
            NodeAction::Pruned => "pruned".to_string(),
            NodeAction::Incumbent => "incumbent".to_string(),
            NodeAction::Branched(j) => format!("branch z{j}"),
        };
        write!(f, "[{}] bound={:.9e} {}", self.node, self.bound, action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpResult {
    pub status: MilpStatus,
    pub c_star: f64,
    pub z_star: DVector<f64>,
    pub p_star: Option<SearchNode>,
    /// LP(P*) and its optimal solution.
    pub lp_star: Option<LpStandardForm>,
    pub sol_star: Option<LpSolution>,
    pub node_count: usize,
    /// Objective of every accepted incumbent, in order.
    pub incumbents: Vec<f64>,
    pub log: Vec<NodeLogEntry>,
}

impl MilpResult {
    pub fn is_optimal(&self) -> bool {
        self.status == MilpStatus::Optimal
    }
}

/// Duals at or below this value (relative to the largest dual) count as zero
/// when a row is allowed to leave its bound during polishing.
const POLISH_DUAL_TOL: f64 = 1e-12;
const POLISH_FEAS_TOL: f64 = 1e-9;

/// Moves fractional zero-cost integer variables to an adjacent integer when
/// every general row stays feasible and every row that stops being tight has
/// a zero dual. Primal feasibility, complementarity and stationarity then
/// hold with the unchanged duals, so the result is an optimal solution of
/// the same LP with the same objective. Variables in equality rows are left
/// alone. Returns the number of variables moved.
pub fn polish_integrality(
    lp: &LpStandardForm,
    sol: &mut LpSolution,
    m: &DVector<f64>,
    integer_vars: &[usize],
    int_tol: f64,
) -> usize {
    if !sol.is_optimal() {
        return 0;
    }
    let candidates: Vec<usize> = integer_vars
        .iter()
        .copied()
        .filter(|&j| {
            let v = sol.primal[j];
            (v - v.round()).abs() > int_tol && lp.cost[j] == 0.0 && lp.a_eq.column(j).iter().all(|&a| a == 0.0)
        })
        .collect();
    if candidates.is_empty() {
        return 0;
    }
    let (bf, _) = lp.rhs(m);
    let mut resid = &lp.a_ineq * &sol.primal - &bf;
    let scale = 1.0 + sol.ineq_duals.amax().max(sol.eq_duals.amax());
    let mut moved = 0;
    for j in candidates {
        let v = sol.primal[j];
        let (near, far) = if v - v.floor() < 0.5 { (v.floor(), v.ceil()) } else { (v.ceil(), v.floor()) };
        let col = lp.a_ineq.column(j);
        for target in [near, far] {
            if target < lp.lower[j] || target > lp.upper[j] {
                continue;
            }
            let delta = target - v;
            let ok = col.iter().enumerate().all(|(i, &a)| {
                if a == 0.0 {
                    return true;
                }
                let new = resid[i] + a * delta;
                let tol = POLISH_FEAS_TOL * (1.0 + bf[i].abs());
                new <= tol && (new >= -tol || sol.ineq_duals[i] <= POLISH_DUAL_TOL * scale)
            });
            if ok {
                for (i, &a) in col.iter().enumerate() {
                    if a != 0.0 {
                        resid[i] += a * delta;
                    }
                }
                sol.primal[j] = target;
                sol.basis.retain(|&b| b != j);
                moved += 1;
                break;
            }
        }
    }
    moved + polish_selector_groups(lp, sol, m, integer_vars, int_tol)
}

/// Same idea for `Σ y = 1` rows over zero-cost integer variables: the
/// whole group is moved to a single member when that keeps the point an
/// optimal KKT point.
fn polish_selector_groups(
    lp: &LpStandardForm,
    sol: &mut LpSolution,
    m: &DVector<f64>,
    integer_vars: &[usize],
    int_tol: f64,
) -> usize {
    let n = lp.n_vars();
    let mut is_int = vec![false; n];
    for &j in integer_vars {
        is_int[j] = true;
    }
    let mut eq_rows_of = vec![0usize; n];
    for i in 0..lp.n_eq() {
        for (j, &a) in lp.a_eq.row(i).iter().enumerate() {
            if a != 0.0 {
                eq_rows_of[j] += 1;
            }
        }
    }
    let (ineq_origin, _) = lp.fold_origins();
    let n_gen = lp.n_ineq();
    let mut lower_dual = vec![0.0; n];
    let mut upper_dual = vec![0.0; n];
    for (r, o) in ineq_origin.iter().enumerate() {
        match *o {
            RowOrigin::Lower(j) => lower_dual[j] = sol.ineq_duals[r],
            RowOrigin::Upper(j) => upper_dual[j] = sol.ineq_duals[r],
            _ => {}
        }
    }
    let (bf, _) = lp.rhs(m);
    let mut resid = &lp.a_ineq * &sol.primal - &bf;
    let scale = 1.0 + sol.ineq_duals.amax().max(sol.eq_duals.amax());
    let frac = |v: f64| (v - v.round()).abs() > int_tol;
    let mut moved = 0;
    for i in 0..lp.n_eq() {
        if lp.b_eq[i] != 1.0 || lp.jac_eq.row(i).iter().any(|&v| v != 0.0) {
            continue;
        }
        let row = lp.a_eq.row(i);
        let members: Vec<usize> = (0..n).filter(|&j| row[j] != 0.0).collect();
        let is_group = members.len() > 1
            && members.iter().all(|&j| {
                row[j] == 1.0 && is_int[j] && lp.cost[j] == 0.0 && eq_rows_of[j] == 1 && lp.lower[j] == 0.0 && lp.upper[j] >= 1.0
            });
        if !is_group || !members.iter().any(|&j| frac(sol.primal[j])) {
            continue;
        }
        let mut order = members.clone();
        order.sort_by(|&a, &b| sol.primal[b].total_cmp(&sol.primal[a]));
        for &pick in &order {
            let deltas: Vec<(usize, f64)> = members
                .iter()
                .map(|&j| (j, if j == pick { 1.0 } else { 0.0 } - sol.primal[j]))
                .filter(|&(_, d)| d != 0.0)
                .collect();
            let leaves_bound = deltas.iter().any(|&(j, d)| {
                let v = sol.primal[j];
                (d > 0.0 && v <= lp.lower[j] + int_tol && lower_dual[j] > POLISH_DUAL_TOL * scale)
                    || (d < 0.0 && v >= lp.upper[j] - int_tol && upper_dual[j] > POLISH_DUAL_TOL * scale)
            });
            if leaves_bound {
                continue;
            }
            let mut shift = vec![0.0; n_gen];
            for &(j, d) in &deltas {
                for (r, &a) in lp.a_ineq.column(j).iter().enumerate() {
                    shift[r] += a * d;
                }
            }
            let ok = shift.iter().enumerate().all(|(r, &dv)| {
                if dv == 0.0 {
                    return true;
                }
                let new = resid[r] + dv;
                let tol = POLISH_FEAS_TOL * (1.0 + bf[r].abs());
                new <= tol && (new >= -tol || sol.ineq_duals[r] <= POLISH_DUAL_TOL * scale)
            });
            if ok {
                for (r, dv) in shift.into_iter().enumerate() {
                    resid[r] += dv;
                }
                for &j in &members {
                    sol.primal[j] = if j == pick { 1.0 } else { 0.0 };
                    sol.basis.retain(|&b| b != j);
                }
                moved += 1;
                break;
            }
        }
    }
    moved
}

fn first_fractional(
    z: &DVector<f64>,
    ints: &[usize],
    tol: f64,
) -> Option<usize> {
    ints.iter()
        .copied()
        .find(|&j| (z[j] - z[j].round()).abs() > tol)
}

pub fn branch_and_bound(p0: &MilpProblem, m: &DVector<f64>) -> Result<MilpResult> {
    branch_and_bound_with(p0, m, &BranchOptions::default(), |_, _, _| Ok(()))
}

/// Branch and bound with a hook called on every accepted incumbent with
/// `(LP(P), solution, node)`.
pub fn branch_and_bound_with<F>(
    p0: &MilpProblem,
    m: &DVector<f64>,
    opts: &BranchOptions,
    mut on_incumbent: F,
) -> Result<MilpResult>
where
    F: FnMut(&LpStandardForm, &LpSolution, &SearchNode) -> Result<()>,
{
    p0.base.validate()?;
    p0.base.check_params(m)?;
    let n = p0.base.n_vars();
    let mut work = p0.base.clone();
    let mut stack = vec![SearchNode::default()];
    let mut best: Option<(SearchNode, LpSolution)> = None;
    let mut c_star = f64::INFINITY;
    let mut node_count = 0;
    let mut incumbents = Vec::new();
    let mut log = Vec::new();
    let mut unbounded = false;

    while let Some(node) = stack.pop() {
        node_count += 1;
        if node_count > opts.max_nodes {
            return Err(Error::NodeLimit(opts.max_nodes));
        }
        let (lo, hi) = node.bounds(&p0.base);
        let empty = lo.iter().zip(&hi).any(|(l, h)| l > h);
        let mut sol = if empty {
            LpSolution::non_optimal(LpStatus::Infeasible, n)
        } else {
            work.lower = lo;
            work.upper = hi;
            solve_lp_with(&work, m, opts.backend)?
        };
        if opts.polish {
            polish_integrality(&work, &mut sol, m, &p0.integer_vars, opts.int_tol);
        }
        let mut record = |action: NodeAction, bound: f64, node: &SearchNode| {
            if opts.record_log {
                log.push(NodeLogEntry {
                    node: node.clone(),
                    bound,
                    action,
                });
            }
        };
        match sol.status {
            LpStatus::Infeasible => {
                record(NodeAction::Infeasible, f64::INFINITY, &node);
                continue;
            }
            LpStatus::Unbounded => {
                unbounded = true;
                break;
            }
            LpStatus::Optimal => {}
        }
        let c_lp = sol.objective;
        if c_lp >= c_star - PRUNE_TOL * (1.0 + c_star.abs()) {
            record(NodeAction::Pruned, c_lp, &node);
            continue;
        }
        match first_fractional(&sol.primal, &p0.integer_vars, opts.int_tol) {
            None => {
                record(NodeAction::Incumbent, c_lp, &node);
                c_star = c_lp;
                incumbents.push(c_lp);
                on_incumbent(&work, &sol, &node)?;
                best = Some((node, sol));
            }
            Some(j) => {
                record(NodeAction::Branched(j), c_lp, &node);
                let v = sol.primal[j];
                let down = node.child(j, Side::Down, v.floor());
                let up = node.child(j, Side::Up, v.ceil());
                match opts.child_order {
                    ChildOrder::DownFirst => {
                        stack.push(up);
                        stack.push(down);
                    }
                    ChildOrder::UpFirst => {
                        stack.push(down);
                        stack.push(up);
                    }
                }
            }
        }
    }

    if unbounded {
        return Ok(MilpResult {
            status: MilpStatus::Unbounded,
            c_star: f64::NEG_INFINITY,
            z_star: DVector::zeros(n),
            p_star: None,
            lp_star: None,
            sol_star: None,
            node_count,
            incumbents,
            log,
        });
    }
    Ok(match best {
        Some((node, sol)) => MilpResult {
            status: MilpStatus::Optimal,
            c_star,
            z_star: sol.primal.clone(),
            lp_star: Some(node.lp(&p0.base)),
            p_star: Some(node),
            sol_star: Some(sol),
            node_count,
            incumbents,
            log,
        },
        None => MilpResult {
            status: MilpStatus::Infeasible,
            c_star: f64::INFINITY,
            z_star: DVector::zeros(n),
            p_star: None,
            lp_star: None,
            sol_star: None,
            node_count,
            incumbents,
            log,
        },
    })
}

/// Cost gradient through LP(P*), with integer variables held by the trail
/// bounds active at P*.
pub fn backward_optimal_subproblem(
    result: &MilpResult,
    m: &DVector<f64>,
    route: GradientRoute,
) -> Result<GradientResult> {
    match (&result.lp_star, &result.sol_star) {
        (Some(lp), Some(sol)) if result.is_optimal() => gradient(lp, sol, m, route),
        _ => Err(Error::Milp("no optimal sub-problem to differentiate".into())),
    }
}

/// Solves and differentiates in one call.
pub fn solve_and_differentiate(
    p0: &MilpProblem,
    m: &DVector<f64>,
    opts: &BranchOptions,
    route: GradientRoute,
) -> Result<(MilpResult, GradientResult)> {
    let result = branch_and_bound_with(p0, m, opts, |_, _, _| Ok(()))?;
    let grad = backward_optimal_subproblem(&result, m, route)?;
    Ok((result, grad))
}

/// Builds a differentiation layer at every accepted incumbent and keeps the
/// last one. Equivalent to the two-stage route; kept as a test oracle.
pub fn embedded_gradient(
    p0: &MilpProblem,
    m: &DVector<f64>,
    opts: &BranchOptions,
    route: GradientRoute,
) -> Result<(MilpResult, GradientResult)> {
    let mut last: Option<GradientResult> = None;
    let result = branch_and_bound_with(p0, m, opts, |lp, sol, _| {
        last = Some(gradient(lp, sol, m, route)?);
        Ok(())
    })?;
    match last {
        Some(g) => Ok((result, g)),
        None => Err(Error::Milp("no incumbent found".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationResult {
    pub status: MilpStatus,
    pub c_star: f64,
    pub z_star: DVector<f64>,
    /// Winning 0/1 assignment, in `integer_vars` order.
    pub assignment: Vec<u8>,
}

/// Brute force over all binary assignments in lexicographic order (first
/// integer variable most significant); ties keep the earliest assignment.
pub fn enumerate_integer_assignments(p0: &MilpProblem, m: &DVector<f64>) -> Result<EnumerationResult> {
    let k = p0.integer_vars.len();
    if k > ENUMERATION_LIMIT {
        return Err(Error::TooManyBinaries(k, ENUMERATION_LIMIT));
    }
    for &j in &p0.integer_vars {
        if p0.base.lower[j] < 0.0 || p0.base.upper[j] > 1.0 {
            return Err(Error::Milp(format!(
                "enumeration needs binary variables, `{}` has bounds [{}, {}]",
                p0.base.var_names[j], p0.base.lower[j], p0.base.upper[j]
            )));
        }
    }
    let n = p0.base.n_vars();
    let mut work = p0.base.clone();
    let mut best: Option<(f64, DVector<f64>, Vec<u8>)> = None;
    for code in 0u32..(1u32 << k) {
        let assignment: Vec<u8> = (0..k).map(|i| ((code >> (k - 1 - i)) & 1) as u8).collect();
        let mut lo = p0.base.lower.clone();
        let mut hi = p0.base.upper.clone();
        let mut empty = false;
        for (i, &j) in p0.integer_vars.iter().enumerate() {
            let v = assignment[i] as f64;
            if v < lo[j] || v > hi[j] {
                empty = true;
            }
            lo[j] = v;
            hi[j] = v;
        }
        if empty {
            continue;
        }
        work.lower = lo;
        work.upper = hi;
        let sol = solve_lp_with(&work, m, Backend::Auto)?;
        match sol.status {
            LpStatus::Optimal => {
                if best.as_ref().is_none_or(|(c, _, _)| sol.objective < *c) {
                    best = Some((sol.objective, sol.primal, assignment));
                }
            }
            LpStatus::Unbounded => {
                return Ok(EnumerationResult {
                    status: MilpStatus::Unbounded,
                    c_star: f64::NEG_INFINITY,
                    z_star: DVector::zeros(n),
                    assignment: Vec::new(),
                })
            }
            LpStatus::Infeasible => {}
        }
    }
    Ok(match best {
        Some((c, z, a)) => EnumerationResult {
            status: MilpStatus::Optimal,
            c_star: c,
            z_star: z,
            assignment: a,
        },
        None => EnumerationResult {
            status: MilpStatus::Infeasible,
            c_star: f64::INFINITY,
            z_star: DVector::zeros(n),
            assignment: Vec::new(),
        },
    })
}
