//! Randomized gradient and optimality batteries.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{envelope_gradient, finite_difference_gradient, gradient, GradientRoute};
use crate::error::{Error, Result};
use crate::forecast::{backward_day, forward_day, LstmParams, Normalization, N_FEATURES};
use crate::hub::HOURS;
use crate::lp::{solve_lp, LpBuilder, LpSolution, LpStandardForm, RowSense};
use crate::milp::{
    backward_optimal_subproblem, branch_and_bound, embedded_gradient, enumerate_integer_assignments, BranchOptions,
    MilpProblem,
};

/// Gradient vs central differences, relative to `max(‖fd‖∞, 1)`.
pub const LP_GRADIENT_TOL: f64 = 1e-4;
/// Absolute gap between the implicit and dual gradients.
pub const ENVELOPE_TOL: f64 = 1e-10;
pub const FD_STEP: f64 = 1e-5;
/// Branch and bound vs enumeration objective.
pub const MILP_OBJECTIVE_TOL: f64 = 1e-9;
/// Two-stage vs embedded gradient, componentwise.
pub const TWO_STAGE_TOL: f64 = 1e-12;
/// BPTT vs central differences, relative to the largest difference quotient.
pub const BPTT_TOL: f64 = 1e-4;
pub const BPTT_STEP: f64 = 1e-6;
/// Duals and slacks below this count as zero for strict complementarity.
const COMPLEMENTARITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryReport {
    pub name: &'static str,
    pub cases: usize,
    /// Cases where the comparison applied.
    pub compared: usize,
    /// Largest error and comparison count of each measured quantity.
    pub max_errors: Vec<(&'static str, f64, usize)>,
    pub failures: Vec<String>,
    pub elapsed: Duration,
}

impl BatteryReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            compared: 0,
            max_errors: Vec::new(),
            failures: Vec::new(),
            elapsed: Duration::ZERO,
        }
    }

    fn note(&mut self, what: &'static str, err: f64) {
        match self.max_errors.iter_mut().find(|(w, _, _)| *w == what) {
            Some((_, e, n)) => {
                *e = e.max(err);
                *n += 1;
            }
            None => self.max_errors.push((what, err, 1)),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.compared > 0
    }

    pub fn summary(&self) -> String {
        let errs: Vec<String> = self.max_errors.iter().map(|(w, e, n)| format!("{w} {e:.2e} over {n}")).collect();
        format!(
            "{} {}: {}/{} compared, {} failures, max {} ({:.1?})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.compared,
            self.cases,
            self.failures.len(),
            errs.join(", "),
            self.elapsed
        )
    }
}

/// Box-bounded LP with up to 10 variables and 8 rows, feasible at `z = ½`
/// for parameters in `[−½, ½]`.
pub fn random_lp(rng: &mut ChaCha8Rng) -> (LpStandardForm, DVector<f64>) {
    let n = rng.gen_range(1..=10);
    let rows = rng.gen_range(1..=8);
    let pdim = rng.gen_range(1..=3);
    let mut b = LpBuilder::new(pdim);
    let vars: Vec<_> = (0..n)
        .map(|j| b.add_var(format!("z{j}"), 0.0, rng.gen_range(1.0..4.0), rng.gen_range(-3.0..3.0)))
        .collect();
    for _ in 0..rows {
        let terms: Vec<_> = vars.iter().map(|&v| (v, rng.gen_range(-3.0..3.0))).collect();
        let at_half: f64 = terms.iter().map(|(_, a)| 0.5 * a).sum();
        let jac: Vec<(usize, f64)> = (0..pdim).map(|k| (k, rng.gen_range(-1.0..1.0) / pdim as f64)).collect();
        b.add_row(&terms, RowSense::Le, at_half + rng.gen_range(0.5..2.0), &jac);
    }
    let m = DVector::from_fn(pdim, |_, _| rng.gen_range(-0.4..0.4));
    (b.build(), m)
}

fn strictly_complementary(lp: &LpStandardForm, sol: &LpSolution, m: &DVector<f64>) -> bool {
    let f = lp.fold_bounds().ineq_residual(&sol.primal, m);
    sol.ineq_duals
        .iter()
        .zip(f.iter())
        .all(|(&l, &fi)| (l > COMPLEMENTARITY_TOL) == (fi.abs() <= COMPLEMENTARITY_TOL))
}

/// Implicit cost gradients against central differences, and against the
/// dual gradient on strictly complementary instances.
pub fn lp_gradient_battery(cases: usize, seed: u64) -> Result<BatteryReport> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = BatteryReport::new("lp gradient");
    let mut k = 0;
    while rep.cases < cases {
        k += 1;
        if k > 100 * cases {
            return Err(Error::OracleInapplicable("too few feasible random LPs".into()));
        }
        let (lp, m) = random_lp(&mut rng);
        let sol = solve_lp(&lp, &m)?;
        if !sol.is_optimal() {
            continue;
        }
        rep.cases += 1;
        let g = gradient(&lp, &sol, &m, GradientRoute::Full)?;
        match finite_difference_gradient(&lp, &m, FD_STEP) {
            Ok(fd) if !g.degenerate => {
                rep.compared += 1;
                let err = (&g.dcost_dm - &fd).amax() / fd.amax().max(1.0);
                rep.note("fd relative", err);
                if err >= LP_GRADIENT_TOL {
                    rep.failures.push(format!("case {}: fd relative error {err:.3e}", rep.cases));
                }
            }
            Ok(_) | Err(Error::Kink { .. }) | Err(Error::OracleInapplicable(_)) => {}
            Err(e) => return Err(e),
        }
        if !g.degenerate && strictly_complementary(&lp, &sol, &m) {
            let env = envelope_gradient(&lp, &sol)?;
            let err = (&g.dcost_dm - &env).amax();
            rep.note("envelope", err);
            if err > ENVELOPE_TOL {
                rep.failures.push(format!("case {}: envelope gap {err:.3e}", rep.cases));
            }
        }
    }
    rep.elapsed = t0.elapsed();
    Ok(rep)
}

/// Up to 10 binaries and 12 continuous variables, feasible with all
/// binaries at 0 and continuous variables at ½.
pub fn random_milp(rng: &mut ChaCha8Rng) -> (MilpProblem, DVector<f64>) {
    let nb = rng.gen_range(1..=10);
    let nc = rng.gen_range(1..=12);
    let rows = rng.gen_range(1..=6);
    let mut b = LpBuilder::new(1);
    let mut vars = Vec::new();
    for j in 0..nb {
        vars.push(b.add_var(format!("y{j}"), 0.0, 1.0, rng.gen_range(-5.0..5.0)));
    }
    for j in 0..nc {
        vars.push(b.add_var(format!("x{j}"), 0.0, rng.gen_range(1.0..4.0), rng.gen_range(-3.0..3.0)));
    }
    for _ in 0..rows {
        let terms: Vec<_> = vars.iter().map(|&v| (v, rng.gen_range(-2.0..2.0))).collect();
        let at_ref: f64 = terms.iter().skip(nb).map(|(_, a)| 0.5 * a).sum();
        b.add_row(&terms, RowSense::Le, at_ref + rng.gen_range(0.1..2.0), &[(0, 1.0)]);
    }
    let p = MilpProblem::new(b.build(), (0..nb).collect()).expect("valid random MILP");
    (p, DVector::from_element(1, rng.gen_range(0.0..0.1)))
}

/// Branch and bound against enumeration of every binary assignment.
pub fn milp_battery(cases: usize, seed: u64) -> Result<BatteryReport> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = BatteryReport::new("branch and bound");
    for case in 1..=cases {
        let (p, m) = random_milp(&mut rng);
        rep.cases += 1;
        let r = branch_and_bound(&p, &m)?;
        let e = enumerate_integer_assignments(&p, &m)?;
        rep.compared += 1;
        if r.status != e.status {
            rep.failures.push(format!("case {case}: status {:?} vs {:?}", r.status, e.status));
            continue;
        }
        if r.is_optimal() {
            let err = (r.c_star - e.c_star).abs();
            rep.note("objective", err);
            if err > MILP_OBJECTIVE_TOL {
                rep.failures.push(format!("case {case}: objective gap {err:.3e}"));
            }
        }
    }
    rep.elapsed = t0.elapsed();
    Ok(rep)
}

/// Gradient of the optimal sub-problem against the gradient kept from the
/// last incumbent during the search.
pub fn two_stage_battery(cases: usize, seed: u64) -> Result<BatteryReport> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = BatteryReport::new("two-stage vs embedded");
    let mut k = 0;
    while rep.cases < cases {
        k += 1;
        if k > 100 * cases {
            return Err(Error::OracleInapplicable("too few feasible random MILPs".into()));
        }
        let (p, m) = random_milp(&mut rng);
        let r = branch_and_bound(&p, &m)?;
        if !r.is_optimal() {
            continue;
        }
        rep.cases += 1;
        rep.compared += 1;
        let two = backward_optimal_subproblem(&r, &m, GradientRoute::Full)?;
        let (_, emb) = embedded_gradient(&p, &m, &BranchOptions::default(), GradientRoute::Full)?;
        let err = (&two.dcost_dm - &emb.dcost_dm).amax().max((&two.dz_dm - &emb.dz_dm).amax());
        rep.note("componentwise", err);
        if err > TWO_STAGE_TOL {
            rep.failures.push(format!("case {}: gradient gap {err:.3e}", rep.cases));
        }
    }
    rep.elapsed = t0.elapsed();
    Ok(rep)
}

/// Loss `forecastᵀ g` of one day, for difference quotients.
fn lstm_loss(p: &LstmParams, window: &DMatrix<f64>, norm: &Normalization, g: &[f64]) -> Result<f64> {
    let cache = forward_day(window, p, norm, window.nrows())?;
    Ok(cache.forecast.iter().zip(g).map(|(f, gi)| f * gi).sum())
}

/// Backpropagation through time against central differences over every
/// parameter, on random sizes (hidden ≤ 8, window ≤ 12).
pub fn lstm_battery(cases: usize, seed: u64) -> Result<BatteryReport> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = BatteryReport::new("lstm bptt");
    for case in 1..=cases {
        let hidden = rng.gen_range(1..=8);
        let rows = rng.gen_range(1..=12);
        let p = LstmParams::init(N_FEATURES, hidden, rng.gen());
        let window = DMatrix::from_fn(rows, N_FEATURES, |_, _| rng.gen_range(-1.0..1.0));
        // A high floor keeps every forecast away from the zero clamp.
        let norm = Normalization { min: 1000.0, max: 1100.0 };
        let g: Vec<f64> = (0..HOURS).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cache = forward_day(&window, &p, &norm, rows)?;
        if cache.clamped.iter().any(|&c| c) {
            return Err(Error::OracleInapplicable("forecast hit the clamp".into()));
        }
        let analytic = backward_day(&cache, &p, &g)?.to_flat();
        let flat = p.to_flat();
        let mut fd = vec![0.0; flat.len()];
        let mut q = p.clone();
        for (k, slot) in fd.iter_mut().enumerate() {
            let mut w = flat.clone();
            w[k] = flat[k] + BPTT_STEP;
            q.set_flat(&w)?;
            let up = lstm_loss(&q, &window, &norm, &g)?;
            w[k] = flat[k] - BPTT_STEP;
            q.set_flat(&w)?;
            let down = lstm_loss(&q, &window, &norm, &g)?;
            *slot = (up - down) / (2.0 * BPTT_STEP);
        }
        let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
        let err = analytic.iter().zip(&fd).map(|(a, f)| (a - f).abs()).fold(0.0, f64::max) / scale;
        rep.cases += 1;
        rep.compared += 1;
        rep.note("relative", err);
        if err >= BPTT_TOL {
            rep.failures.push(format!("case {case} (hidden {hidden}, window {rows}): relative error {err:.3e}"));
        }
    }
    rep.elapsed = t0.elapsed();
    Ok(rep)
}

/// All four batteries at their standard sizes.
pub fn run_all(seed: u64) -> Result<Vec<BatteryReport>> {
    Ok(vec![
        lp_gradient_battery(100, seed)?,
        milp_battery(100, seed.wrapping_add(1))?,
        two_stage_battery(50, seed.wrapping_add(2))?,
        lstm_battery(20, seed.wrapping_add(3))?,
    ])
}
