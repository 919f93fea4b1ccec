use nalgebra::DVector;

use super::{LpSolution, LpStandardForm};

/// Tolerances for [`check_kkt`]. Residuals are compared absolutely, the
/// duality gap relative to `1 + |C*|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktTolerances {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
    pub stationarity: f64,
    pub gap: f64,
}

impl Default for KktTolerances {
    fn default() -> Self {
        Self {
            primal: 1e-8,
            dual: 1e-8,
            complementarity: 1e-8,
            stationarity: 1e-8,
            gap: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// max(0, max_i f_i)
    pub primal_ineq: f64,
    /// max |h_i|
    pub primal_eq: f64,
    /// max(0, −min λ)
    pub dual_feasibility: f64,
    /// max |λ_i f_i|
    pub complementarity: f64,
    /// ‖c + A_fᵀλ + A_hᵀμ‖∞
    pub stationarity: f64,
    /// |primal − dual| / (1 + |primal|)
    pub relative_gap: f64,
    pub ok: bool,
}

/// Evaluates every KKT residual group of an optimal solution on the folded system.
pub fn check_kkt(
    lp: &LpStandardForm,
    sol: &LpSolution,
    m: &DVector<f64>,
    tol: &KktTolerances,
) -> KktReport {
    let folded = lp.fold_bounds();
    let f = folded.ineq_residual(&sol.primal, m);
    let h = folded.eq_residual(&sol.primal, m);
    let lam = &sol.ineq_duals;
    let mu = &sol.eq_duals;

    let primal_ineq = f.iter().fold(0.0_f64, |a, &v| a.max(v));
    let primal_eq = h.amax();
    let dual_feasibility = lam.iter().fold(0.0_f64, |a, &v| a.max(-v));
    let complementarity = lam
        .iter()
        .zip(f.iter())
        .fold(0.0_f64, |a, (&l, &fi)| a.max((l * fi).abs()));
    let grad = &lp.cost + folded.a_f.transpose() * lam + folded.a_h.transpose() * mu;
    let stationarity = grad.amax();
    let dual = sol.dual_objective(&folded, lp, m);
    let relative_gap = (sol.objective - dual).abs() / (1.0 + sol.objective.abs());

    let ok = primal_ineq <= tol.primal
        && primal_eq <= tol.primal
        && dual_feasibility <= tol.dual
        && complementarity <= tol.complementarity
        && stationarity <= tol.stationarity
        && relative_gap <= tol.gap;
    KktReport {
        primal_ineq,
        primal_eq,
        dual_feasibility,
        complementarity,
        stationarity,
        relative_gap,
        ok,
    }
}
