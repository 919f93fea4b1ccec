use mesval::lp::{
    check_kkt, solve_lp_with, Backend, KktTolerances, LpBuilder, LpStandardForm, LpStatus,
    RowSense,
};
use nalgebra::DVector;
use proptest::prelude::*;

const INF: f64 = f64::INFINITY;

fn both(lp: &LpStandardForm, m: &DVector<f64>) -> [mesval::lp::LpSolution; 2] {
    [
        solve_lp_with(lp, m, Backend::Dense).unwrap(),
        solve_lp_with(lp, m, Backend::Highs).unwrap(),
    ]
}

#[test]
fn textbook_max_problem() {
    // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
    let mut b = LpBuilder::new(0);
    let x = b.add_var("x", 0.0, INF, -3.0);
    let y = b.add_var("y", 0.0, INF, -5.0);
    b.add_row(&[(x, 1.0)], RowSense::Le, 4.0, &[]);
    b.add_row(&[(y, 2.0)], RowSense::Le, 12.0, &[]);
    b.add_row(&[(x, 3.0), (y, 2.0)], RowSense::Le, 18.0, &[]);
    let lp = b.build();
    let m = DVector::zeros(0);
    for sol in both(&lp, &m) {
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 36.0).abs() < 1e-9);
        assert!((sol.primal[0] - 2.0).abs() < 1e-9);
        assert!((sol.primal[1] - 6.0).abs() < 1e-9);
        // shadow prices 0, 1.5, 1
        assert!((sol.ineq_duals[0]).abs() < 1e-9);
        assert!((sol.ineq_duals[1] - 1.5).abs() < 1e-9);
        assert!((sol.ineq_duals[2] - 1.0).abs() < 1e-9);
        let rep = check_kkt(&lp, &sol, &m, &KktTolerances::default());
        assert!(rep.ok, "{rep:?}");
    }
}

#[test]
fn parameter_dual_sign() {
    // min x s.t. x ≥ M: C* = M, λ = 1
    let mut b = LpBuilder::new(1);
    let x = b.add_var("x", -INF, INF, 1.0);
    b.add_row(&[(x, 1.0)], RowSense::Ge, 0.0, &[(0, 1.0)]);
    let lp = b.build();
    let m = DVector::from_vec(vec![2.5]);
    for sol in both(&lp, &m) {
        assert!((sol.objective - 2.5).abs() < 1e-12);
        assert!((sol.ineq_duals[0] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn equality_and_bound_duals() {
    // min x + 2y s.t. x + y = 3, 0 ≤ x ≤ 1, y ≥ 0 → x = 1, y = 2
    let mut b = LpBuilder::new(0);
    let x = b.add_var("x", 0.0, 1.0, 1.0);
    let y = b.add_var("y", 0.0, INF, 2.0);
    b.add_row(&[(x, 1.0), (y, 1.0)], RowSense::Eq, 3.0, &[]);
    let lp = b.build();
    let m = DVector::zeros(0);
    for sol in both(&lp, &m) {
        assert!((sol.objective - 5.0).abs() < 1e-9);
        assert!((sol.eq_duals[0] + 2.0).abs() < 1e-9);
        let rep = check_kkt(&lp, &sol, &m, &KktTolerances::default());
        assert!(rep.ok, "{rep:?}");
    }
}

#[test]
fn fixed_variable_and_offset() {
    let mut b = LpBuilder::new(0);
    let x = b.add_var("x", 2.0, 2.0, 3.0);
    let y = b.add_var("y", 0.0, INF, 1.0);
    b.add_row(&[(x, 1.0), (y, 1.0)], RowSense::Ge, 5.0, &[]);
    b.add_offset(10.0);
    let lp = b.build();
    let m = DVector::zeros(0);
    for sol in both(&lp, &m) {
        assert!((sol.objective - 19.0).abs() < 1e-9);
        let rep = check_kkt(&lp, &sol, &m, &KktTolerances::default());
        assert!(rep.ok, "{rep:?}");
    }
}

#[test]
fn infeasible_and_unbounded() {
    let mut b = LpBuilder::new(0);
    let x = b.add_var("x", 0.0, 1.0, 1.0);
    b.add_row(&[(x, 1.0)], RowSense::Ge, 2.0, &[]);
    let lp = b.build();
    for sol in both(&lp, &DVector::zeros(0)) {
        assert_eq!(sol.status, LpStatus::Infeasible);
        assert_eq!(sol.objective, INF);
    }

    let mut b = LpBuilder::new(0);
    let x = b.add_var("x", 0.0, INF, -1.0);
    let y = b.add_var("y", 0.0, INF, 0.0);
    b.add_row(&[(x, 1.0), (y, -1.0)], RowSense::Le, 1.0, &[]);
    let lp = b.build();
    for sol in both(&lp, &DVector::zeros(0)) {
        assert_eq!(sol.status, LpStatus::Unbounded);
    }
}

#[test]
fn degenerate_vertex_terminates() {
    // Classic cycling example (Beale), solved without cycling by Bland's rule.
    let mut b = LpBuilder::new(0);
    let c = [-0.75, 150.0, -0.02, 6.0];
    let v: Vec<_> = (0..4).map(|j| b.add_var(format!("x{j}"), 0.0, INF, c[j])).collect();
    b.add_row(
        &[(v[0], 0.25), (v[1], -60.0), (v[2], -0.04), (v[3], 9.0)],
        RowSense::Le,
        0.0,
        &[],
    );
    b.add_row(
        &[(v[0], 0.5), (v[1], -90.0), (v[2], -0.02), (v[3], 3.0)],
        RowSense::Le,
        0.0,
        &[],
    );
    b.add_row(&[(v[2], 1.0)], RowSense::Le, 1.0, &[]);
    let lp = b.build();
    let m = DVector::zeros(0);
    for sol in both(&lp, &m) {
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 0.05).abs() < 1e-9);
    }
}

#[test]
fn redundant_equalities() {
    let mut b = LpBuilder::new(0);
    let x = b.add_var("x", 0.0, INF, 1.0);
    let y = b.add_var("y", 0.0, INF, 1.0);
    b.add_row(&[(x, 1.0), (y, 1.0)], RowSense::Eq, 2.0, &[]);
    b.add_row(&[(x, 2.0), (y, 2.0)], RowSense::Eq, 4.0, &[]);
    let lp = b.build();
    let sol = solve_lp_with(&lp, &DVector::zeros(0), Backend::Dense).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.objective - 2.0).abs() < 1e-9);
}

fn random_lp(seed_vals: &[f64], n: usize, rows: usize) -> LpStandardForm {
    // Feasible by construction: rows hold at z = 0.5·1 with slack, box bounds.
    let mut b = LpBuilder::new(1);
    let vars: Vec<_> = (0..n)
        .map(|j| b.add_var(format!("z{j}"), 0.0, 1.0 + seed_vals[j].abs(), seed_vals[n + j]))
        .collect();
    let mut k = 2 * n;
    for _ in 0..rows {
        let terms: Vec<_> = vars
            .iter()
            .map(|&v| {
                let a = seed_vals[k % seed_vals.len()];
                k += 1;
                (v, a)
            })
            .collect();
        let at_half: f64 = terms.iter().map(|(_, a)| 0.5 * a).sum();
        b.add_row(&terms, RowSense::Le, at_half + 0.5, &[(0, 1.0)]);
    }
    b.build()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backends_agree_and_satisfy_kkt(
        vals in proptest::collection::vec(-3.0f64..3.0, 40),
        n in 2usize..6,
        rows in 1usize..5,
        mparam in 0.0f64..1.0,
    ) {
        let lp = random_lp(&vals, n, rows);
        let m = DVector::from_vec(vec![mparam]);
        let [d, h] = both(&lp, &m);
        prop_assert_eq!(d.status, LpStatus::Optimal);
        prop_assert_eq!(h.status, LpStatus::Optimal);
        prop_assert!((d.objective - h.objective).abs() <= 1e-7 * (1.0 + d.objective.abs()));
        for sol in [&d, &h] {
            let rep = check_kkt(&lp, sol, &m, &KktTolerances::default());
            prop_assert!(rep.ok, "{:?}", rep);
        }
    }
}

#[test]
fn box_vertex_enumeration_oracle() {
    // min −x−y s.t. x+y ≤ 1.5, 0 ≤ x,y ≤ 1; oracle: best feasible vertex.
    let mut b = LpBuilder::new(0);
    let x = b.add_var("x", 0.0, 1.0, -1.0);
    let y = b.add_var("y", 0.0, 1.0, -1.0);
    b.add_row(&[(x, 1.0), (y, 1.0)], RowSense::Le, 1.5, &[]);
    let lp = b.build();
    let candidates = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 0.5), (0.5, 1.0)];
    let oracle = candidates
        .iter()
        .filter(|(x, y)| x + y <= 1.5 + 1e-12)
        .map(|(x, y)| -x - y)
        .fold(f64::INFINITY, f64::min);
    for sol in both(&lp, &DVector::zeros(0)) {
        assert!((sol.objective - oracle).abs() < 1e-12);
        assert!((sol.primal[0] + sol.primal[1] - 1.5).abs() < 1e-9);
    }
}

#[test]
fn kkt_flags_constructed_violations() {
    let mut b = LpBuilder::new(0);
    let x = b.add_var("x", -INF, INF, 1.0);
    let y = b.add_var("y", 0.0, INF, 0.0);
    b.add_row(&[(x, 1.0)], RowSense::Ge, 3.0, &[]);
    b.add_row(&[(y, 1.0)], RowSense::Le, 5.0, &[]);
    let lp = b.build();
    let m = DVector::zeros(0);
    let tol = KktTolerances::default();
    let sol = solve_lp_with(&lp, &m, Backend::Dense).unwrap();
    assert!(check_kkt(&lp, &sol, &m, &tol).ok);

    let mut bad = sol.clone();
    bad.primal[0] = 2.0;
    let rep = check_kkt(&lp, &bad, &m, &tol);
    assert!(!rep.ok);
    assert!((rep.primal_ineq - 1.0).abs() < 1e-12);

    // Row 1 (y ≤ 5) is slack with f = −5 at y = 0: λ + 0.1 gives λ·f = −0.5.
    let mut bad = sol.clone();
    bad.ineq_duals[1] += 0.1;
    let rep = check_kkt(&lp, &bad, &m, &tol);
    assert!(!rep.ok);
    assert!((rep.complementarity - 0.5).abs() < 1e-12);
}

#[test]
fn repeated_solves_are_bit_identical() {
    let vals: Vec<f64> = (0..40).map(|i| ((i * 37 % 17) as f64 - 8.0) / 3.0).collect();
    let lp = random_lp(&vals, 5, 4);
    let m = DVector::from_vec(vec![0.3]);
    for backend in [Backend::Dense, Backend::Highs] {
        let a = solve_lp_with(&lp, &m, backend).unwrap();
        let b = solve_lp_with(&lp, &m, backend).unwrap();
        assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Within a fixed basis C*(M) is affine: three collinear M give collinear C*.
    #[test]
    fn cost_affine_while_basis_holds(
        vals in proptest::collection::vec(-3.0f64..3.0, 40),
        n in 2usize..5,
        rows in 1usize..4,
        m0 in 0.1f64..0.9,
    ) {
        let lp = random_lp(&vals, n, rows);
        let pts = [m0, m0 + 1e-4, m0 + 2e-4];
        let sols: Vec<_> = pts
            .iter()
            .map(|&v| solve_lp_with(&lp, &DVector::from_vec(vec![v]), Backend::Dense).unwrap())
            .collect();
        prop_assume!(sols.iter().all(|s| s.basis == sols[0].basis));
        let second = sols[2].objective - 2.0 * sols[1].objective + sols[0].objective;
        prop_assert!(second.abs() <= 1e-9 * (1.0 + sols[0].objective.abs()));
    }
}
