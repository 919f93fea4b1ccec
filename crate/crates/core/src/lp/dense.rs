//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Works on the folded system with every structural variable split into
//! `z = z⁺ − z⁻`, one slack per inequality row and one artificial per row.
//! After phase 2 the optimal basis is refactorized from the original data so
//! the returned primal and dual values do not carry accumulated pivot error.

use nalgebra::{DMatrix, DVector};

use super::{LpSolution, LpStandardForm, LpStatus, PIVOT_TOL};
use crate::error::{Error, Result};

const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

struct Tableau {
    /// m × (ncols + 1), last column is the right-hand side.
    t: DMatrix<f64>,
    basis: Vec<usize>,
    ncols: usize,
    first_artificial: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.t[(r, self.ncols)]
    }

    fn pivot(&mut self, row: usize, col: usize, reduced: &mut [f64], value: &mut f64) {
        let piv = self.t[(row, col)];
        let width = self.ncols + 1;
        for j in 0..width {
            self.t[(row, j)] /= piv;
        }
        let pivot_row: Vec<f64> = (0..width).map(|j| self.t[(row, j)]).collect();
        for r in 0..self.t.nrows() {
            if r == row {
                continue;
            }
            let factor = self.t[(r, col)];
            if factor != 0.0 {
                for (j, pj) in pivot_row.iter().enumerate() {
                    if *pj != 0.0 {
                        self.t[(r, j)] -= factor * pj;
                    }
                }
                self.t[(r, col)] = 0.0;
            }
        }
        let factor = reduced[col];
        if factor != 0.0 {
            for j in 0..self.ncols {
                reduced[j] -= factor * pivot_row[j];
            }
            reduced[col] = 0.0;
            *value -= factor * pivot_row[self.ncols];
        }
        self.basis[row] = col;
    }

    /// Bland's rule: lowest-index improving column, ties in the ratio test
    /// broken by lowest basic-variable index.
    fn run(&mut self, reduced: &mut [f64], value: &mut f64) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let Some(col) = (0..self.first_artificial).find(|&j| reduced[j] < -COST_TOL) else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.t.nrows() {
                let a = self.t[(r, col)];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - 1e-12
                                || (ratio <= bratio + 1e-12 && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            match best {
                None => return Ok(false),
                Some((row, _)) => self.pivot(row, col, reduced, value),
            }
        }
        Err(Error::NumericalBreakdown(format!(
            "pivot limit {MAX_PIVOTS} reached"
        )))
    }
}

pub(super) fn solve(lp: &LpStandardForm, m: &DVector<f64>) -> Result<LpSolution> {
    let n = lp.n_vars();
    let folded = lp.fold_bounds();
    let q = folded.n_ineq();
    let p = folded.n_eq();
    let rows = q + p;
    let bf = &folded.b_f + &folded.jac_f * m;
    let bh = &folded.b_h + &folded.jac_h * m;

    // Columns: z⁺ (n), z⁻ (n), slacks (q), artificials (rows).
    let n_struct = 2 * n + q;
    let ncols = n_struct + rows;
    let mut a_std = DMatrix::zeros(rows, n_struct);
    let mut b_std = DVector::zeros(rows);
    let mut sign = vec![1.0; rows];
    for r in 0..rows {
        let (arow, b) = if r < q {
            (folded.a_f.row(r), bf[r])
        } else {
            (folded.a_h.row(r - q), bh[r - q])
        };
        let s = if b < 0.0 { -1.0 } else { 1.0 };
        sign[r] = s;
        for j in 0..n {
            a_std[(r, j)] = s * arow[j];
            a_std[(r, n + j)] = -s * arow[j];
        }
        if r < q {
            a_std[(r, 2 * n + r)] = s;
        }
        b_std[r] = s * b;
    }

    let mut t = DMatrix::zeros(rows, ncols + 1);
    t.view_mut((0, 0), (rows, n_struct)).copy_from(&a_std);
    let mut basis = Vec::with_capacity(rows);
    for r in 0..rows {
        t[(r, n_struct + r)] = 1.0;
        t[(r, ncols)] = b_std[r];
        if r < q && sign[r] > 0.0 {
            basis.push(2 * n + r);
        } else {
            basis.push(n_struct + r);
        }
    }
    let mut tab = Tableau {
        t,
        basis,
        ncols,
        first_artificial: n_struct,
    };

    // Phase 1: minimize the sum of basic artificials.
    let mut reduced = vec![0.0; ncols];
    let mut value = 0.0;
    for r in 0..rows {
        if tab.basis[r] >= n_struct {
            for j in 0..ncols {
                reduced[j] -= tab.t[(r, j)];
            }
            value -= tab.rhs(r);
        }
    }
    for r in 0..rows {
        reduced[tab.basis[r]] = 0.0;
    }
    tab.run(&mut reduced, &mut value)?;
    // `value` tracks minus the phase-1 objective.
    if -value > FEAS_TOL * (1.0 + b_std.amax()) {
        return Ok(LpSolution::non_optimal(LpStatus::Infeasible, n));
    }
    for r in 0..rows {
        if tab.basis[r] >= n_struct {
            if let Some(col) = (0..n_struct).find(|&j| tab.t[(r, j)].abs() > PIVOT_TOL) {
                let mut dummy = vec![0.0; ncols];
                let mut dv = 0.0;
                tab.pivot(r, col, &mut dummy, &mut dv);
            }
        }
    }

    // Phase 2.
    let mut cost = vec![0.0; ncols];
    for j in 0..n {
        cost[j] = lp.cost[j];
        cost[n + j] = -lp.cost[j];
    }
    let mut reduced = cost.clone();
    let mut value = 0.0;
    for r in 0..rows {
        let cb = cost[tab.basis[r]];
        if cb != 0.0 {
            for j in 0..ncols {
                reduced[j] -= cb * tab.t[(r, j)];
            }
            value -= cb * tab.rhs(r);
        }
    }
    if !tab.run(&mut reduced, &mut value)? {
        return Ok(LpSolution::non_optimal(LpStatus::Unbounded, n));
    }

    // Refactorize the optimal basis.
    let full_col = |j: usize| -> DVector<f64> {
        if j < n_struct {
            a_std.column(j).into_owned()
        } else {
            let mut e = DVector::zeros(rows);
            e[j - n_struct] = 1.0;
            e
        }
    };
    let mut bmat = DMatrix::zeros(rows, rows);
    for (r, &j) in tab.basis.iter().enumerate() {
        bmat.set_column(r, &full_col(j));
    }
    let cb = DVector::from_iterator(rows, tab.basis.iter().map(|&j| cost[j]));
    let (x_b, pi) = if rows == 0 {
        (DVector::zeros(0), DVector::zeros(0))
    } else {
        let lu = bmat.clone().lu();
        let x_b = lu.solve(&b_std).ok_or_else(|| {
            Error::NumericalBreakdown("optimal basis matrix is singular".into())
        })?;
        let pi = bmat
            .transpose()
            .lu()
            .solve(&cb)
            .ok_or_else(|| Error::NumericalBreakdown("optimal basis matrix is singular".into()))?;
        (x_b, pi)
    };

    let mut primal = DVector::zeros(n);
    let mut in_basis = vec![false; n];
    for (r, &j) in tab.basis.iter().enumerate() {
        if j < n {
            primal[j] += x_b[r];
            in_basis[j] = true;
        } else if j < 2 * n {
            primal[j - n] -= x_b[r];
            in_basis[j - n] = true;
        }
    }
    let ineq_duals = DVector::from_iterator(q, (0..q).map(|r| -sign[r] * pi[r]));
    let eq_duals = DVector::from_iterator(p, (q..rows).map(|r| -sign[r] * pi[r]));
    let objective = lp.objective(&primal);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        primal,
        ineq_duals,
        eq_duals,
        objective,
        basis: (0..n).filter(|&j| in_basis[j]).collect(),
    })
}
