//! HiGHS dual simplex for LPs too large for the dense tableau.
//!
//! HiGHS reports duals under `c − Aᵀy − z = 0`. Row duals map to `λ = −y`
//! (inequalities) and `μ = −y` (equalities). Column duals are split onto the
//! folded bound rows by sign: `z > 0` sits on the lower bound, `z < 0` on the
//! upper bound, and fixed columns take `μ = −z`.

use std::num::NonZeroU32;

use highs::{ColProblem, HighsModelStatus, Sense};
use nalgebra::DVector;

use super::{LpSolution, LpStandardForm, LpStatus, RowOrigin};
use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-9;
const ENTRY_TOL: f64 = 0.0;

fn run(lp: &LpStandardForm, m: &DVector<f64>, presolve: bool) -> Result<highs::SolvedModel> {
    let (bf, bh) = lp.rhs(m);
    let mut pb = ColProblem::new();
    let mut rows = Vec::with_capacity(lp.n_ineq() + lp.n_eq());
    for i in 0..lp.n_ineq() {
        rows.push(pb.add_row(..=bf[i]));
    }
    for i in 0..lp.n_eq() {
        rows.push(pb.add_row(bh[i]..=bh[i]));
    }
    let q = lp.n_ineq();
    for j in 0..lp.n_vars() {
        let mut factors = Vec::new();
        for i in 0..q {
            let a = lp.a_ineq[(i, j)];
            if a.abs() > ENTRY_TOL {
                factors.push((rows[i], a));
            }
        }
        for i in 0..lp.n_eq() {
            let a = lp.a_eq[(i, j)];
            if a.abs() > ENTRY_TOL {
                factors.push((rows[q + i], a));
            }
        }
        pb.add_column(lp.cost[j], lp.lower[j]..=lp.upper[j], factors);
    }
    let mut model = pb
        .try_optimise(Sense::Minimise)
        .map_err(|s| Error::Backend(format!("model rejected: {s:?}")))?;
    model.make_quiet();
    model.set_threads(NonZeroU32::MIN);
    model.set_option("solver", "simplex");
    model.set_option("presolve", if presolve { "on" } else { "off" });
    model.set_option("primal_feasibility_tolerance", FEAS_TOL);
    model.set_option("dual_feasibility_tolerance", FEAS_TOL);
    model
        .try_solve()
        .map_err(|s| Error::Backend(format!("solve failed: {s:?}")))
}

pub(super) fn solve(lp: &LpStandardForm, m: &DVector<f64>) -> Result<LpSolution> {
    let n = lp.n_vars();
    if n == 0 {
        return super::dense::solve(lp, m);
    }
    let mut solved = run(lp, m, true)?;
    if solved.status() == HighsModelStatus::UnboundedOrInfeasible {
        solved = run(lp, m, false)?;
    }
    match solved.status() {
        HighsModelStatus::Optimal => {}
        HighsModelStatus::Infeasible => return Ok(LpSolution::non_optimal(LpStatus::Infeasible, n)),
        HighsModelStatus::Unbounded => return Ok(LpSolution::non_optimal(LpStatus::Unbounded, n)),
        HighsModelStatus::UnboundedOrInfeasible => {
            return Ok(LpSolution::non_optimal(LpStatus::Infeasible, n))
        }
        other => return Err(Error::Backend(format!("unexpected model status {other:?}"))),
    }

    let sol = solved.get_solution();
    let primal = DVector::from_column_slice(sol.columns());
    let row_dual = sol.dual_rows();
    let col_dual = sol.dual_columns();
    let q = lp.n_ineq();
    let (ineq_origin, eq_origin) = lp.fold_origins();

    let ineq_duals = DVector::from_iterator(
        ineq_origin.len(),
        ineq_origin.iter().map(|o| match *o {
            RowOrigin::Ineq(i) => (-row_dual[i]).max(0.0),
            RowOrigin::Lower(j) => col_dual[j].max(0.0),
            RowOrigin::Upper(j) => (-col_dual[j]).max(0.0),
            _ => unreachable!(),
        }),
    );
    let eq_duals = DVector::from_iterator(
        eq_origin.len(),
        eq_origin.iter().map(|o| match *o {
            RowOrigin::Eq(i) => -row_dual[q + i],
            RowOrigin::Fixed(j) => -col_dual[j],
            _ => unreachable!(),
        }),
    );
    let basis = (0..n)
        .filter(|&j| {
            let x = primal[j];
            let scale = 1.0 + x.abs();
            (x - lp.lower[j]).abs() > FEAS_TOL * scale && (lp.upper[j] - x).abs() > FEAS_TOL * scale
        })
        .collect();
    let objective = lp.objective(&primal);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        primal,
        ineq_duals,
        eq_duals,
        objective,
        basis,
    })
}
