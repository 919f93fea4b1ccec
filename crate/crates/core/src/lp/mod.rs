//! Parameterized linear programs in a single canonical form.
//!
//! Every LP in the crate is stored as
//!
//! ```text
//! min  cᵀz + c₀
//! s.t. A_f z − b_f(M) ≤ 0,   b_f(M) = b_f⁰ + J_f M
//!      A_h z − b_h(M) = 0,   b_h(M) = b_h⁰ + J_h M
//!      l ≤ z ≤ u
//! ```
//!
//! The parameter vector `M` enters the right-hand sides affinely, so the
//! Jacobians `J_f`, `J_h` are constant. Variable bounds are kept apart from
//! the rows and folded into inequality rows only when the KKT system is
//! assembled ([`LpStandardForm::fold_bounds`]).

mod builder;
mod dense;
mod highs_backend;
mod kkt;

pub use builder::{LpBuilder, LpSpec, RowSense, RowSpec, VarId, VarSpec};
pub use kkt::{check_kkt, KktReport, KktTolerances};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivot threshold below which the dense simplex refuses a pivot element.
pub const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LpStandardForm {
    pub var_names: Vec<String>,
    pub cost: DVector<f64>,
    pub cost_offset: f64,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    /// ∂b_f/∂M, shape (ineq rows × param_dim).
    pub jac_ineq: DMatrix<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    /// ∂b_h/∂M, shape (eq rows × param_dim).
    pub jac_eq: DMatrix<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub param_dim: usize,
}

/// Where a row of the folded inequality/equality system came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOrigin {
    Ineq(usize),
    Eq(usize),
    Lower(usize),
    Upper(usize),
    /// Variable with `lower == upper`, folded as an equality.
    Fixed(usize),
}

/// The LP with variable bounds folded into the row blocks.
///
/// Row order: general inequality rows, then for each variable in index
/// order its lower-bound row followed by its upper-bound row (finite bounds
/// only). Fixed variables become equality rows appended after the general
/// equality rows.
#[derive(Debug, Clone)]
pub struct FoldedSystem {
    pub a_f: DMatrix<f64>,
    pub b_f: DVector<f64>,
    pub jac_f: DMatrix<f64>,
    pub a_h: DMatrix<f64>,
    pub b_h: DVector<f64>,
    pub jac_h: DMatrix<f64>,
    pub ineq_origin: Vec<RowOrigin>,
    pub eq_origin: Vec<RowOrigin>,
}

impl FoldedSystem {
    pub fn n_ineq(&self) -> usize {
        self.a_f.nrows()
    }

    pub fn n_eq(&self) -> usize {
        self.a_h.nrows()
    }

    /// f(z, M) = A_f z − b_f(M).
    pub fn ineq_residual(&self, z: &DVector<f64>, m: &DVector<f64>) -> DVector<f64> {
        &self.a_f * z - (&self.b_f + &self.jac_f * m)
    }

    /// h(z, M) = A_h z − b_h(M).
    pub fn eq_residual(&self, z: &DVector<f64>, m: &DVector<f64>) -> DVector<f64> {
        &self.a_h * z - (&self.b_h + &self.jac_h * m)
    }
}

impl LpStandardForm {
    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.a_ineq.nrows()
    }

    pub fn n_eq(&self) -> usize {
        self.a_eq.nrows()
    }

    /// Checks that every block has mutually consistent dimensions.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        let checks = [
            (self.var_names.len() == n, "var_names length"),
            (self.a_ineq.ncols() == n || self.a_ineq.nrows() == 0, "A_f columns"),
            (self.b_ineq.len() == self.a_ineq.nrows(), "b_f length"),
            (self.jac_ineq.nrows() == self.a_ineq.nrows(), "J_f rows"),
            (self.jac_ineq.ncols() == self.param_dim, "J_f columns"),
            (self.a_eq.ncols() == n || self.a_eq.nrows() == 0, "A_h columns"),
            (self.b_eq.len() == self.a_eq.nrows(), "b_h length"),
            (self.jac_eq.nrows() == self.a_eq.nrows(), "J_h rows"),
            (self.jac_eq.ncols() == self.param_dim, "J_h columns"),
            (self.lower.len() == n && self.upper.len() == n, "bounds length"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::Dimension(what.to_string()));
            }
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] {
                return Err(Error::InvertedBounds {
                    name: self.var_names[j].clone(),
                    lower: self.lower[j],
                    upper: self.upper[j],
                });
            }
        }
        Ok(())
    }

    pub fn check_params(&self, m: &DVector<f64>) -> Result<()> {
        if m.len() != self.param_dim {
            return Err(Error::Dimension(format!(
                "parameter vector has length {}, expected {}",
                m.len(),
                self.param_dim
            )));
        }
        Ok(())
    }

    /// Right-hand sides b_f(M), b_h(M).
    pub fn rhs(&self, m: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (
            &self.b_ineq + &self.jac_ineq * m,
            &self.b_eq + &self.jac_eq * m,
        )
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        self.cost.dot(z) + self.cost_offset
    }

    /// Same LP with replaced variable bounds (used by branch and bound).
    pub fn with_bounds(&self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            lower,
            upper,
            ..self.clone()
        }
    }

    /// Row origins of the folded system without building its matrices.
    pub fn fold_origins(&self) -> (Vec<RowOrigin>, Vec<RowOrigin>) {
        let mut ineq_origin: Vec<RowOrigin> = (0..self.n_ineq()).map(RowOrigin::Ineq).collect();
        let mut eq_origin: Vec<RowOrigin> = (0..self.n_eq()).map(RowOrigin::Eq).collect();
        for j in 0..self.n_vars() {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l == u {
                eq_origin.push(RowOrigin::Fixed(j));
                continue;
            }
            if l.is_finite() {
                ineq_origin.push(RowOrigin::Lower(j));
            }
            if u.is_finite() {
                ineq_origin.push(RowOrigin::Upper(j));
            }
        }
        (ineq_origin, eq_origin)
    }

    pub fn fold_bounds(&self) -> FoldedSystem {
        let n = self.n_vars();
        let p = self.param_dim;
        let (ineq_origin, eq_origin) = self.fold_origins();

        let mut a_f = DMatrix::zeros(ineq_origin.len(), n);
        let mut b_f = DVector::zeros(ineq_origin.len());
        let mut jac_f = DMatrix::zeros(ineq_origin.len(), p);
        for (r, origin) in ineq_origin.iter().enumerate() {
            match *origin {
                RowOrigin::Ineq(i) => {
                    a_f.row_mut(r).copy_from(&self.a_ineq.row(i));
                    b_f[r] = self.b_ineq[i];
                    jac_f.row_mut(r).copy_from(&self.jac_ineq.row(i));
                }
                RowOrigin::Lower(j) => {
                    a_f[(r, j)] = -1.0;
                    b_f[r] = -self.lower[j];
                }
                RowOrigin::Upper(j) => {
                    a_f[(r, j)] = 1.0;
                    b_f[r] = self.upper[j];
                }
                _ => unreachable!(),
            }
        }

        let mut a_h = DMatrix::zeros(eq_origin.len(), n);
        let mut b_h = DVector::zeros(eq_origin.len());
        let mut jac_h = DMatrix::zeros(eq_origin.len(), p);
        for (r, origin) in eq_origin.iter().enumerate() {
            match *origin {
                RowOrigin::Eq(i) => {
                    a_h.row_mut(r).copy_from(&self.a_eq.row(i));
                    b_h[r] = self.b_eq[i];
                    jac_h.row_mut(r).copy_from(&self.jac_eq.row(i));
                }
                RowOrigin::Fixed(j) => {
                    a_h[(r, j)] = 1.0;
                    b_h[r] = self.lower[j];
                }
                _ => unreachable!(),
            }
        }

        FoldedSystem {
            a_f,
            b_f,
            jac_f,
            a_h,
            b_h,
            jac_h,
            ineq_origin,
            eq_origin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Primal/dual solution. Duals refer to the rows of [`FoldedSystem`].
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: DVector<f64>,
    /// λ ≥ 0, one per folded inequality row.
    pub ineq_duals: DVector<f64>,
    /// μ, one per folded equality row.
    pub eq_duals: DVector<f64>,
    pub objective: f64,
    /// Indices of variables in the optimal basis (strictly between bounds
    /// for the HiGHS backend).
    pub basis: Vec<usize>,
}

impl LpSolution {
    pub fn non_optimal(status: LpStatus, n: usize) -> Self {
        Self {
            status,
            primal: DVector::zeros(n),
            ineq_duals: DVector::zeros(0),
            eq_duals: DVector::zeros(0),
            objective: match status {
                LpStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            basis: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Dual objective −λᵀb_f(M) − μᵀb_h(M) + c₀ of the folded system.
    pub fn dual_objective(&self, folded: &FoldedSystem, lp: &LpStandardForm, m: &DVector<f64>) -> f64 {
        let bf = &folded.b_f + &folded.jac_f * m;
        let bh = &folded.b_h + &folded.jac_h * m;
        -self.ineq_duals.dot(&bf) - self.eq_duals.dot(&bh) + lp.cost_offset
    }
}

/// LP engine selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Dense two-phase tableau simplex with Bland's rule.
    Dense,
    /// HiGHS dual simplex.
    Highs,
    /// Dense for small problems, HiGHS otherwise.
    #[default]
    Auto,
}

/// Problems with at most this many `rows × columns` go to the dense solver
/// under [`Backend::Auto`].
pub const DENSE_SIZE_LIMIT: usize = 4_000;

pub fn solve_lp(lp: &LpStandardForm, m: &DVector<f64>) -> Result<LpSolution> {
    solve_lp_with(lp, m, Backend::Auto)
}

pub fn solve_lp_with(lp: &LpStandardForm, m: &DVector<f64>, backend: Backend) -> Result<LpSolution> {
    lp.validate()?;
    lp.check_params(m)?;
    let backend = match backend {
        Backend::Auto => {
            let rows = lp.n_ineq() + lp.n_eq() + 2 * lp.n_vars();
            if rows * (lp.n_vars() + rows) <= DENSE_SIZE_LIMIT {
                Backend::Dense
            } else {
                Backend::Highs
            }
        }
        b => b,
    };
    match backend {
        Backend::Dense => dense::solve(lp, m),
        _ => highs_backend::solve(lp, m),
    }
}
