//! Sensitivity of LP optima to the right-hand-side parameters `M`.
//!
//! The KKT residual map on the folded system is
//!
//! ```text
//! G(z, λ, μ; M) = [ c + A_fᵀλ + A_hᵀμ ;  λ ∘ f(z, M) ;  h(z, M) ]
//! ```
//!
//! with `f = A_f z − b_f(M)`, `h = A_h z − b_h(M)`. The implicit function
//! theorem gives `d[z, λ, μ]/dM = −G_z⁻¹ G_M`, and with an M-independent
//! objective `dC*/dM = cᵀ dz/dM`. For RHS-only parameters this equals the
//! envelope value `−λᵀ ∂b_f/∂M − μᵀ ∂b_h/∂M`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpSolution, LpStandardForm, RowOrigin};

/// Damping added to `G_z` when the undamped system is singular.
pub const DAMPING: f64 = 1e-10;
/// Condition estimate above which the damped system is declared degenerate.
pub const MAX_CONDITION: f64 = 1e12;
/// Duals at or below this value do not count as strongly active.
pub const ACTIVE_TOL: f64 = 1e-9;
/// Full KKT systems up to this dimension use the dense route under `Auto`.
pub const FULL_ROUTE_LIMIT: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct KktJacobians {
    /// ∂G/∂[z, λ, μ], square of size n + q + p.
    pub g_z: DMatrix<f64>,
    /// ∂G/∂M, (n + q + p) × param_dim.
    pub g_m: DMatrix<f64>,
    /// Damping applied by the last solve, 0 if none.
    pub regularization: f64,
    pub n_vars: usize,
    pub n_ineq: usize,
    pub n_eq: usize,
}

/// Solution of the linearized KKT system.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    /// d[z, λ, μ]/dM.
    pub d_primal_dual: DMatrix<f64>,
    pub conditioning: f64,
    pub regularization: f64,
    /// ‖G_z·X + G_M‖∞ with the undamped `G_z`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientRoute {
    /// Dense LU on the full KKT system.
    Full,
    /// Active-set reduction: only strongly active rows constrain `dz`.
    Reduced,
    /// Full for small systems, reduced otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    pub dz_dm: DMatrix<f64>,
    /// dC*/dM = cᵀ dz/dM.
    pub dcost_dm: DVector<f64>,
    pub conditioning: f64,
    pub regularization: f64,
    /// Set when the implicit system was unusable and the dual gradient was
    /// returned instead (with `dz_dm = 0`).
    pub degenerate: bool,
}

fn check_dims(lp: &LpStandardForm, sol: &LpSolution, n_ineq: usize, n_eq: usize) -> Result<()> {
    if !sol.is_optimal() {
        return Err(Error::Dimension("sensitivity needs an optimal solution".into()));
    }
    if sol.primal.len() != lp.n_vars() || sol.ineq_duals.len() != n_ineq || sol.eq_duals.len() != n_eq {
        return Err(Error::Dimension(format!(
            "solution shape ({}, {}, {}) does not match LP ({}, {n_ineq}, {n_eq})",
            sol.primal.len(),
            sol.ineq_duals.len(),
            sol.eq_duals.len(),
            lp.n_vars(),
        )));
    }
    Ok(())
}

pub fn assemble_kkt_jacobians(
    lp: &LpStandardForm,
    sol: &LpSolution,
    m: &DVector<f64>,
) -> Result<KktJacobians> {
    lp.check_params(m)?;
    let folded = lp.fold_bounds();
    check_dims(lp, sol, folded.n_ineq(), folded.n_eq())?;
    let n = lp.n_vars();
    let q = folded.n_ineq();
    let p = folded.n_eq();
    let dim = n + q + p;
    let f = folded.ineq_residual(&sol.primal, m);
    let lam = &sol.ineq_duals;

    let mut g_z = DMatrix::zeros(dim, dim);
    g_z.view_mut((0, n), (n, q)).copy_from(&folded.a_f.transpose());
    g_z.view_mut((0, n + q), (n, p)).copy_from(&folded.a_h.transpose());
    for i in 0..q {
        for j in 0..n {
            g_z[(n + i, j)] = lam[i] * folded.a_f[(i, j)];
        }
        g_z[(n + i, n + i)] = f[i];
    }
    g_z.view_mut((n + q, 0), (p, n)).copy_from(&folded.a_h);

    let mut g_m = DMatrix::zeros(dim, lp.param_dim);
    for i in 0..q {
        for k in 0..lp.param_dim {
            g_m[(n + i, k)] = -lam[i] * folded.jac_f[(i, k)];
        }
    }
    g_m.view_mut((n + q, 0), (p, lp.param_dim))
        .copy_from(&(-&folded.jac_h));

    Ok(KktJacobians {
        g_z,
        g_m,
        regularization: 0.0,
        n_vars: n,
        n_ineq: q,
        n_eq: p,
    })
}

/// max |U_ii| / min |U_ii| of an LU factorization; infinite if singular.
fn lu_condition(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..u.nrows().min(u.ncols()) {
        let d = u[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if u.nrows() == 0 {
        1.0
    } else if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solves `G_z X = −G_M`, damping `G_z` by `ε·I` if it is singular.
pub fn solution_sensitivity(jac: &KktJacobians) -> Result<Sensitivity> {
    let rhs = -&jac.g_m;
    let attempt = |eps: f64| {
        let mut g = jac.g_z.clone();
        for i in 0..g.nrows() {
            g[(i, i)] += eps;
        }
        let lu = g.lu();
        let cond = lu_condition(&lu);
        if cond > MAX_CONDITION {
            return None;
        }
        lu.solve(&rhs).map(|x| (x, cond))
    };
    let (x, cond, eps) = match attempt(0.0) {
        Some((x, c)) => (x, c, 0.0),
        None => match attempt(DAMPING) {
            Some((x, c)) => (x, c, DAMPING),
            None => {
                return Err(Error::DegenerateSolution(format!(
                    "KKT matrix of size {} stays singular after damping {DAMPING:e}",
                    jac.g_z.nrows()
                )))
            }
        },
    };
    let residual = (&jac.g_z * &x + &jac.g_m).amax();
    Ok(Sensitivity {
        d_primal_dual: x,
        conditioning: cond,
        regularization: eps,
        residual,
    })
}

/// −λᵀ ∂b_f/∂M − μᵀ ∂b_h/∂M on the folded system.
pub fn envelope_gradient(lp: &LpStandardForm, sol: &LpSolution) -> Result<DVector<f64>> {
    let (ineq_origin, eq_origin) = lp.fold_origins();
    check_dims(lp, sol, ineq_origin.len(), eq_origin.len())?;
    Ok(envelope_on(lp, &ineq_origin, &eq_origin, sol))
}

/// Bound rows carry no parameter dependence, so only general rows contribute.
fn envelope_on(lp: &LpStandardForm, ineq_origin: &[RowOrigin], eq_origin: &[RowOrigin], sol: &LpSolution) -> DVector<f64> {
    let mut g = DVector::zeros(lp.param_dim);
    for (r, o) in ineq_origin.iter().enumerate() {
        if let RowOrigin::Ineq(i) = *o {
            g -= sol.ineq_duals[r] * lp.jac_ineq.row(i).transpose();
        }
    }
    for (r, o) in eq_origin.iter().enumerate() {
        if let RowOrigin::Eq(i) = *o {
            g -= sol.eq_duals[r] * lp.jac_eq.row(i).transpose();
        }
    }
    g
}

fn fallback(lp: &LpStandardForm, sol: &LpSolution, reason: &str) -> GradientResult {
    log::debug!("diff: falling back to dual gradient: {reason}");
    let (ineq_origin, eq_origin) = lp.fold_origins();
    GradientResult {
        dz_dm: DMatrix::zeros(lp.n_vars(), lp.param_dim),
        dcost_dm: envelope_on(lp, &ineq_origin, &eq_origin, sol),
        conditioning: f64::INFINITY,
        regularization: DAMPING,
        degenerate: true,
    }
}

/// Cost gradient through the full KKT system. Falls back to the dual
/// gradient (flagged `degenerate`) when the system is unusable.
pub fn cost_gradient(lp: &LpStandardForm, sol: &LpSolution, jac: &KktJacobians) -> Result<GradientResult> {
    let (ineq_origin, eq_origin) = lp.fold_origins();
    check_dims(lp, sol, ineq_origin.len(), eq_origin.len())?;
    if jac.n_vars != lp.n_vars() || jac.g_m.ncols() != lp.param_dim {
        return Err(Error::Dimension("KKT Jacobians do not belong to this LP".into()));
    }
    match solution_sensitivity(jac) {
        Ok(s) => {
            let dz_dm = s.d_primal_dual.rows(0, lp.n_vars()).into_owned();
            let dcost_dm = dz_dm.transpose() * &lp.cost;
            Ok(GradientResult {
                dz_dm,
                dcost_dm,
                conditioning: s.conditioning,
                regularization: s.regularization,
                degenerate: false,
            })
        }
        Err(Error::DegenerateSolution(msg)) => Ok(fallback(lp, sol, &msg)),
        Err(e) => Err(e),
    }
}

/// Cost gradient through the strongly active constraint set.
///
/// Variables pinned by an active bound or a fixed bound get `dz_j = 0`;
/// the remaining columns solve `A_act dz = J_act` (least-norm when the
/// active set is short). Rows with `λ ≤ ACTIVE_TOL` keep `dλ = 0` and do
/// not constrain `dz`, which is what the damped full system converges to.
pub fn reduced_cost_gradient(lp: &LpStandardForm, sol: &LpSolution) -> Result<GradientResult> {
    let (ineq_origin, eq_origin) = lp.fold_origins();
    check_dims(lp, sol, ineq_origin.len(), eq_origin.len())?;
    let n = lp.n_vars();
    let pd = lp.param_dim;
    let scale = 1.0 + sol.ineq_duals.amax().max(sol.eq_duals.amax());

    let mut pinned = vec![false; n];
    // (is_ineq, row index into a_ineq / a_eq)
    let mut rows: Vec<(bool, usize)> = Vec::new();
    for (r, origin) in ineq_origin.iter().enumerate() {
        if sol.ineq_duals[r] <= ACTIVE_TOL * scale {
            continue;
        }
        match *origin {
            RowOrigin::Lower(j) | RowOrigin::Upper(j) => pinned[j] = true,
            RowOrigin::Ineq(i) => rows.push((true, i)),
            _ => unreachable!(),
        }
    }
    for origin in &eq_origin {
        match *origin {
            RowOrigin::Fixed(j) => pinned[j] = true,
            RowOrigin::Eq(i) => rows.push((false, i)),
            _ => unreachable!(),
        }
    }
    let free: Vec<usize> = (0..n).filter(|&j| !pinned[j]).collect();
    let k = rows.len();
    let nf = free.len();
    let row_of = |&(is_ineq, i): &(bool, usize)| {
        if is_ineq {
            (lp.a_ineq.row(i), lp.jac_ineq.row(i))
        } else {
            (lp.a_eq.row(i), lp.jac_eq.row(i))
        }
    };
    let mut jm = DMatrix::zeros(k, pd);
    for (a, r) in rows.iter().enumerate() {
        jm.row_mut(a).copy_from(&row_of(r).1);
    }

    let mut col_of = vec![usize::MAX; n];
    for (c, &j) in free.iter().enumerate() {
        col_of[j] = c;
    }
    let mut entries = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in row_of(r).0.iter().enumerate() {
            if v != 0.0 && col_of[j] != usize::MAX {
                entries.push((i, col_of[j], v));
            }
        }
    }

    let solved = if k > nf {
        None
    } else if nf == 0 {
        Some((DMatrix::zeros(0, pd), 1.0))
    } else if nf <= FULL_ROUTE_LIMIT {
        let mut a = DMatrix::zeros(k, nf);
        for &(i, c, v) in &entries {
            a[(i, c)] = v;
        }
        dense_active_solve(&a, &jm)
    } else {
        sparse_least_norm(nf, k, &entries, &jm)
    };

    let Some((dz_free, cond)) = solved else {
        return Ok(fallback(lp, sol, &format!("{k} strongly active rows for {nf} free columns")));
    };
    let mut dz_dm = DMatrix::zeros(n, pd);
    for (c, &j) in free.iter().enumerate() {
        dz_dm.row_mut(j).copy_from(&dz_free.row(c));
    }
    let mut lhs = DMatrix::<f64>::zeros(k, pd);
    for &(i, c, v) in &entries {
        for kk in 0..pd {
            lhs[(i, kk)] += v * dz_free[(c, kk)];
        }
    }
    let residual = (lhs - &jm).amax();
    if residual > 1e-6 * (1.0 + jm.amax()) {
        return Ok(fallback(lp, sol, "active rows inconsistent"));
    }
    let dcost_dm = dz_dm.transpose() * &lp.cost;
    Ok(GradientResult {
        dz_dm,
        dcost_dm,
        conditioning: cond,
        regularization: 0.0,
        degenerate: false,
    })
}

/// Square LU or least-norm `Aᵀ(AAᵀ)⁻¹J` on a small active set.
fn dense_active_solve(a: &DMatrix<f64>, jm: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    if a.nrows() == a.ncols() {
        let lu = a.clone().lu();
        let cond = lu_condition(&lu);
        if cond > MAX_CONDITION {
            return None;
        }
        lu.solve(jm).map(|x| (x, cond))
    } else {
        let lu = (a * a.transpose()).lu();
        let cond = lu_condition(&lu);
        if cond > MAX_CONDITION * MAX_CONDITION.sqrt() {
            return None;
        }
        lu.solve(jm).map(|y| (a.transpose() * y, cond.sqrt()))
    }
}

/// Least-norm solution of `A dz = J` through the sparse augmented system
/// `[I Aᵀ; A 0][dz; y] = [0; J]`. The returned conditioning is the growth
/// `‖A‖∞‖dz‖∞ / ‖J‖∞`, a lower bound on the true condition number.
fn sparse_least_norm(
    nf: usize,
    k: usize,
    entries: &[(usize, usize, f64)],
    jm: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, f64)> {
    use faer::prelude::*;
    use faer::sparse::{SparseColMat, Triplet};

    let dim = nf + k;
    let mut trip: Vec<Triplet<usize, usize, f64>> = (0..nf).map(|c| Triplet::new(c, c, 1.0)).collect();
    for &(i, c, v) in entries {
        trip.push(Triplet::new(nf + i, c, v));
        trip.push(Triplet::new(c, nf + i, v));
    }
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(dim, dim, &trip).ok()?;
    let lu = mat.sp_lu().ok()?;
    let rhs = faer::Mat::<f64>::from_fn(dim, jm.ncols(), |r, c| if r < nf { 0.0 } else { jm[(r - nf, c)] });
    let x = lu.solve(&rhs);
    let dz = DMatrix::from_fn(nf, jm.ncols(), |r, c| x[(r, c)]);
    if dz.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let a_norm = entries.iter().map(|e| e.2.abs()).fold(0.0, f64::max);
    let growth = a_norm * dz.amax() / jm.amax().max(f64::MIN_POSITIVE);
    if growth > MAX_CONDITION {
        return None;
    }
    Some((dz, growth.max(1.0)))
}

/// Cost gradient by the requested route.
pub fn gradient(
    lp: &LpStandardForm,
    sol: &LpSolution,
    m: &DVector<f64>,
    route: GradientRoute,
) -> Result<GradientResult> {
    let dim = lp.n_vars() + lp.n_ineq() + lp.n_eq() + 2 * lp.n_vars();
    let full = match route {
        GradientRoute::Full => true,
        GradientRoute::Reduced => false,
        GradientRoute::Auto => dim <= FULL_ROUTE_LIMIT,
    };
    if full {
        let jac = assemble_kkt_jacobians(lp, sol, m)?;
        cost_gradient(lp, sol, &jac)
    } else {
        lp.check_params(m)?;
        reduced_cost_gradient(lp, sol)
    }
}

/// Relative tolerance between one-sided slopes before a kink is reported.
pub const KINK_TOL: f64 = 1e-6;

/// Central-difference estimate of dC*/dM. Each slot is also checked with
/// one-sided differences; disagreement is reported as [`Error::Kink`].
pub fn finite_difference_gradient(lp: &LpStandardForm, m: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    lp.check_params(m)?;
    let cost_at = |mm: &DVector<f64>| -> Result<f64> {
        let sol = solve_lp(lp, mm)?;
        if !sol.is_optimal() {
            return Err(Error::OracleInapplicable(format!(
                "perturbed problem is {:?}",
                sol.status
            )));
        }
        Ok(sol.objective)
    };
    let c0 = cost_at(m)?;
    let mut g = DVector::zeros(m.len());
    for k in 0..m.len() {
        let mut mp = m.clone();
        mp[k] += h;
        let mut mn = m.clone();
        mn[k] -= h;
        let cp = cost_at(&mp)?;
        let cn = cost_at(&mn)?;
        let right = (cp - c0) / h;
        let left = (c0 - cn) / h;
        if (right - left).abs() > KINK_TOL * (1.0 + right.abs().max(left.abs())) + 1e-9 / h {
            return Err(Error::Kink { slot: k, left, right });
        }
        g[k] = (cp - cn) / (2.0 * h);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{LpBuilder, RowSense};

    #[test]
    fn scalar_kkt_blocks() {
        let mut b = LpBuilder::new(1);
        let x = b.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        b.add_row(&[(x, 1.0)], RowSense::Ge, 0.0, &[(0, 1.0)]);
        let lp = b.build();
        let m = DVector::from_vec(vec![3.0]);
        let sol = solve_lp(&lp, &m).unwrap();
        let jac = assemble_kkt_jacobians(&lp, &sol, &m).unwrap();
        assert_eq!(jac.g_z, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]));
        assert_eq!(jac.g_m, DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
        let s = solution_sensitivity(&jac).unwrap();
        assert!((s.d_primal_dual[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(s.d_primal_dual[(1, 0)].abs() < 1e-12);
    }
}
