use mesval::hub::{
    build_day_ahead, build_hub_matrices, build_intra_day, build_joint, check_dispatch, dispatch_cost,
    piecewise_linearize, slot, solve_sequential, HubConfig, InvariantTolerances, Stage, HOURS, LOAD_SLOTS,
};
use mesval::milp::BranchOptions;
use mesval::Error;
use proptest::prelude::*;

const E_PRICE: [f64; 24] = [
    0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.5, 0.5, 0.8, 0.8, 0.8, 0.8, 0.8, 0.5, 0.5, 0.5, 0.8, 0.8, 0.8, 0.8, 0.5, 0.5,
    0.3, 0.3,
];
const GAS: f64 = 0.25;
const BOILER_ETA: f64 = 0.9;
const COP: f64 = 4.0;
const ID_FACTOR: f64 = 1.5;
const BOILER_RU: f64 = 100.0;

fn toy_toml(with_storage: bool) -> String {
    let prices: Vec<String> = E_PRICE.iter().map(|p| p.to_string()).collect();
    let mut s = format!(
        r#"
schema_version = 1

[prices]
refund_ratio = 0.8
[prices.day_ahead]
electricity = [{}]
gas = {GAS}
[prices.intra_day]
electricity = {{ factor = {ID_FACTOR} }}
gas = {{ factor = 1.2 }}

[[converters]]
name = "boiler"
kind = "gas_boiler"
capacity = 3000.0
efficiency_curve = [[0.0, {BOILER_ETA}], [1.0, {BOILER_ETA}]]
reserve_up = {BOILER_RU}
reserve_down = {BOILER_RU}

[[converters]]
name = "chiller"
kind = "electric_refrigerator"
capacity = 3000.0
efficiency_curve = [[0.0, {COP}], [1.0, {COP}]]
reserve_up = 500.0
reserve_down = 500.0
"#,
        prices.join(", ")
    );
    if with_storage {
        s.push_str(
            r#"
[[storages]]
name = "battery"
carrier = "electricity"
capacity = 400.0
max_power = 100.0
charge_cost = 0.01
discharge_cost = 0.01
initial_soc = 200.0
"#,
        );
    }
    s.push_str(
        r#"
[topology]
nodes = [
  { name = "grid", kind = "input", carrier = "electricity" },
  { name = "gas", kind = "input", carrier = "gas" },
  { name = "boiler", kind = "converter" },
  { name = "chiller", kind = "converter" },
  { name = "ebus", kind = "bus", carrier = "electricity" },
  { name = "hbus", kind = "bus", carrier = "heat" },
  { name = "cbus", kind = "bus", carrier = "cooling" },
  { name = "e_load", kind = "load", carrier = "electricity" },
  { name = "h_load", kind = "load", carrier = "heat" },
  { name = "c_load", kind = "load", carrier = "cooling" },
"#,
    );
    if with_storage {
        s.push_str("  { name = \"battery\", kind = \"storage\" },\n");
    }
    s.push_str(
        r#"]
branches = [
  { from = "grid", to = "ebus" },
  { from = "gas", to = "boiler" },
  { from = "boiler", to = "hbus" },
  { from = "ebus", to = "chiller" },
  { from = "chiller", to = "cbus" },
  { from = "ebus", to = "e_load" },
  { from = "hbus", to = "h_load" },
  { from = "cbus", to = "c_load" },
"#,
    );
    if with_storage {
        s.push_str("  { from = \"ebus\", to = \"battery\" },\n  { from = \"battery\", to = \"ebus\" },\n");
    }
    s.push_str("]\n");
    s
}

fn toy(with_storage: bool) -> HubConfig {
    HubConfig::from_toml_str(&toy_toml(with_storage)).unwrap()
}

fn default_hub() -> HubConfig {
    HubConfig::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/hub.toml")).unwrap()
}

fn profile(e: f64, h: f64, c: f64) -> Vec<f64> {
    let mut m = vec![0.0; LOAD_SLOTS];
    for t in 0..HOURS {
        let w = ((t as f64 - 14.0) / 24.0 * std::f64::consts::TAU).cos();
        m[slot(0, t)] = e * (1.0 + 0.2 * w);
        m[slot(1, t)] = h * (1.0 - 0.2 * w);
        m[slot(2, t)] = c * (1.0 + 0.3 * w);
    }
    m
}

/// Closed-form day-ahead cost of the storage-free toy hub.
fn toy_closed_form(m: &[f64]) -> f64 {
    (0..HOURS)
        .map(|t| E_PRICE[t] * (m[slot(0, t)] + m[slot(2, t)] / COP) + GAS * m[slot(1, t)] / BOILER_ETA)
        .sum()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn toy_matrices_follow_topology() {
    let mats = build_hub_matrices(&toy(false)).unwrap();
    assert_eq!(mats.n_branches(), 8);
    // branches: grid->ebus, gas->boiler, boiler->hbus, ebus->chiller,
    // chiller->cbus, ebus->e_load, hbus->h_load, cbus->c_load
    let x: Vec<f64> = mats.x.iter().copied().collect();
    assert_eq!(mats.x.shape(), (2, 8));
    assert_eq!(mats.x.row(0).iter().copied().collect::<Vec<_>>(), vec![1., 0., 0., 0., 0., 0., 0., 0.]);
    assert_eq!(mats.x.row(1).iter().copied().collect::<Vec<_>>(), vec![0., 1., 0., 0., 0., 0., 0., 0.]);
    assert_eq!(x.iter().sum::<f64>(), 2.0);
    assert_eq!(mats.y.shape(), (3, 8));
    assert_eq!(mats.y[(0, 5)], 1.0);
    assert_eq!(mats.y[(1, 6)], 1.0);
    assert_eq!(mats.y[(2, 7)], 1.0);
    assert_eq!(mats.y.iter().sum::<f64>(), 3.0);

    // three bus rows, then one port row per converter
    assert_eq!(mats.z.nrows(), 5);
    let row = |r: usize| mats.z.row(r).iter().copied().collect::<Vec<_>>();
    assert_eq!(row(0), vec![1., 0., 0., -1., 0., -1., 0., 0.]);
    assert_eq!(row(1), vec![0., 0., 1., 0., 0., 0., -1., 0.]);
    assert_eq!(row(2), vec![0., 0., 0., 0., 1., 0., 0., -1.]);
    assert_eq!(row(3), vec![0., BOILER_ETA, -1., 0., 0., 0., 0., 0.]);
    assert_eq!(row(4), vec![0., 0., 0., COP, -1., 0., 0., 0.]);
}

#[test]
fn default_hub_dimensions() {
    let mats = build_hub_matrices(&default_hub()).unwrap();
    assert_eq!(mats.topology.nodes.len(), 15);
    assert_eq!(mats.n_branches(), 19);
    assert_eq!(mats.x.nrows(), 2);
    assert_eq!(mats.y.nrows(), 3);
    // 3 buses, CHP heat and electricity ports, one port per other converter
    assert_eq!(mats.z.nrows(), 8);
}

#[test]
fn unreferenced_node_is_rejected() {
    let text = toy_toml(false).replace(
        "{ name = \"c_load\", kind = \"load\", carrier = \"cooling\" },",
        "{ name = \"c_load\", kind = \"load\", carrier = \"cooling\" },\n  { name = \"orphan\", kind = \"bus\", carrier = \"heat\" },",
    );
    let cfg = HubConfig::from_toml_str(&text).unwrap();
    assert!(matches!(build_hub_matrices(&cfg), Err(Error::Hub(_))));
}

#[test]
fn converter_port_without_branch_is_rejected() {
    let text = toy_toml(false).replace("  { from = \"boiler\", to = \"hbus\" },\n", "");
    let cfg = HubConfig::from_toml_str(&text).unwrap();
    assert!(matches!(build_hub_matrices(&cfg), Err(Error::Hub(_))));
}

#[test]
fn affine_curve_has_no_linearization_error() {
    for segments in 1..=5 {
        let b = piecewise_linearize(&[[0.0, 0.8], [1.0, 0.8]], 1000.0, segments).unwrap();
        for k in 0..=40 {
            let p = 1000.0 * k as f64 / 40.0;
            assert!((b.approx_input(p) - b.true_input(p)).abs() < 1e-9);
        }
    }
}

#[test]
fn piecewise_is_exact_at_breakpoints() {
    let curve = [[0.0, 0.5], [0.5, 0.45], [1.0, 0.35]];
    let b = piecewise_linearize(&curve, 900.0, 2).unwrap();
    assert!((b.approx_input(450.0) - 450.0 / 0.45).abs() < 1e-9);
    assert!((b.approx_input(900.0) - 900.0 / 0.35).abs() < 1e-9);
    assert_eq!(b.approx_input(0.0), 0.0);
}

#[test]
fn mid_segment_gap_is_the_chord_deviation() {
    let curve = [[0.0, 0.5], [0.5, 0.45], [1.0, 0.35]];
    let cap = 900.0;
    let b = piecewise_linearize(&curve, cap, 2).unwrap();
    // three quarters load: efficiency 0.40 by interpolation on the curve
    let p = 0.75 * cap;
    let chord = 0.5 * (450.0 / 0.45 + 900.0 / 0.35);
    let truth = p / 0.40;
    assert!((b.approx_input(p) - chord).abs() < 1e-9);
    assert!((b.approx_input(p) - b.true_input(p) - (chord - truth)).abs() < 1e-9);
    assert!(chord > truth);
}

#[test]
fn piecewise_needs_a_segment_and_two_breakpoints() {
    assert!(piecewise_linearize(&[[0.0, 0.5], [1.0, 0.5]], 1.0, 0).is_err());
    assert!(piecewise_linearize(&[[1.0, 0.5]], 1.0, 2).is_err());
}

#[test]
fn zero_forecast_costs_nothing() {
    let p = build_day_ahead(&vec![0.0; LOAD_SLOTS], &default_hub()).unwrap();
    let r = p.solve().unwrap();
    assert!(r.is_optimal());
    assert!(r.c_star.abs() < 1e-9);
}

#[test]
fn toy_day_ahead_matches_closed_form() {
    let m = profile(800.0, 500.0, 1200.0);
    let p = build_day_ahead(&m, &toy(false)).unwrap();
    let r = p.solve().unwrap();
    assert!(close(r.c_star, toy_closed_form(&m), 1e-9), "{} vs {}", r.c_star, toy_closed_form(&m));
}

#[test]
fn bad_loads_are_rejected() {
    let cfg = toy(false);
    let mut m = profile(800.0, 500.0, 1200.0);
    m[30] = -1.0;
    assert!(matches!(build_day_ahead(&m, &cfg), Err(Error::Hub(_))));
    m[30] = f64::NAN;
    assert!(matches!(build_day_ahead(&m, &cfg), Err(Error::Hub(_))));
    assert!(matches!(build_day_ahead(&[1.0; 24], &cfg), Err(Error::Hub(_))));
}

#[test]
fn perfect_forecast_needs_no_adjustment() {
    let cfg = toy(true);
    let m = profile(800.0, 500.0, 1200.0);
    let out = solve_sequential(&m, &m, &cfg, &BranchOptions::default(), 0).unwrap();
    assert!(out.cost.intra_day.abs() < 1e-9);
    let da = build_day_ahead(&m, &cfg).unwrap().solve().unwrap();
    assert!(close(out.cost.total(), da.c_star, 1e-9));
}

#[test]
fn electricity_shortfall_is_bought_intra_day() {
    let cfg = toy(false);
    let forecast = profile(800.0, 500.0, 1200.0);
    let (hour, delta) = (10, 37.5);
    let mut actual = forecast.clone();
    actual[slot(0, hour)] += delta;
    let out = solve_sequential(&forecast, &actual, &cfg, &BranchOptions::default(), 0).unwrap();
    let ideal = toy_closed_form(&actual);
    let premium = delta * E_PRICE[hour] * (ID_FACTOR - 1.0);
    assert!(close(out.cost.total() - ideal, premium, 1e-9), "{} vs {premium}", out.cost.total() - ideal);
}

#[test]
fn heat_shortfall_beyond_reserve_is_infeasible() {
    let cfg = toy(false);
    let forecast = profile(800.0, 500.0, 1200.0);
    let mut actual = forecast.clone();
    // within reserve: input rises by 80/0.9 < 100
    actual[slot(1, 5)] += 80.0;
    assert!(solve_sequential(&forecast, &actual, &cfg, &BranchOptions::default(), 3).is_ok());
    actual[slot(1, 5)] += 40.0;
    match solve_sequential(&forecast, &actual, &cfg, &BranchOptions::default(), 3) {
        Err(Error::Infeasible { stage, day }) => {
            assert_eq!(stage, "intra-day");
            assert_eq!(day, 3);
        }
        other => panic!("expected intra-day infeasibility, got {other:?}"),
    }
}

#[test]
fn forecast_slots_reach_only_day_ahead_load_rows() {
    let m = profile(800.0, 500.0, 1200.0);
    let p = build_joint(&m, &m, &toy(true)).unwrap();
    let lp = &p.milp.base;
    assert_eq!(lp.param_dim, LOAD_SLOTS);
    assert!(lp.jac_ineq.iter().all(|&v| v == 0.0));
    let da_rows: Vec<usize> = p.load_rows.iter().filter(|r| r.stage == Stage::DayAhead).map(|r| r.eq_row).collect();
    assert_eq!(da_rows.len(), LOAD_SLOTS);
    for i in 0..lp.n_eq() {
        let touched = lp.jac_eq.row(i).iter().any(|&v| v != 0.0);
        assert_eq!(touched, da_rows.contains(&i), "row {i}");
    }
    for r in p.load_rows.iter().filter(|r| r.stage == Stage::DayAhead) {
        let k = slot(r.sector, r.hour);
        assert_eq!(lp.jac_eq.row(r.eq_row).iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(lp.jac_eq[(r.eq_row, k)], 1.0);
    }
}

#[test]
fn intra_day_parameters_are_actual_loads() {
    let cfg = toy(false);
    let m = profile(800.0, 500.0, 1200.0);
    let da = build_day_ahead(&m, &cfg).unwrap();
    let r = da.solve().unwrap();
    let plan = da.day_ahead_plan(&r.z_star).unwrap();
    let id = build_intra_day(&plan, &m, &cfg).unwrap();
    assert_eq!(id.stage, Stage::IntraDay);
    assert!(id.load_rows.iter().all(|r| r.stage == Stage::IntraDay));
    assert_eq!(id.load_rows.len(), LOAD_SLOTS);
    let s = id.solve().unwrap();
    assert!(s.c_star.abs() < 1e-9);
}

#[test]
fn breakdown_and_invariants_on_default_hub() {
    let cfg = default_hub();
    let actual = profile(2300.0, 1300.0, 3800.0);
    let forecast: Vec<f64> = actual.iter().enumerate().map(|(k, a)| a * (1.0 + 0.04 * ((k * 7 % 5) as f64 - 2.0) / 2.0)).collect();
    let p = build_joint(&forecast, &actual, &cfg).unwrap();
    let r = p.solve().unwrap();
    assert!(r.is_optimal());
    let b = dispatch_cost(&p, &r.z_star);
    assert!(close(b.total(), r.c_star, 1e-12));
    let rep = check_dispatch(&p, &r.z_star, &InvariantTolerances::default());
    assert!(rep.ok(), "{rep:?}");
}

#[test]
fn joint_is_no_worse_than_sequential() {
    let cfg = toy(true);
    let actual = profile(800.0, 500.0, 1200.0);
    let forecast: Vec<f64> = actual.iter().enumerate().map(|(k, a)| a * if k % 3 == 0 { 1.05 } else { 0.97 }).collect();
    let seq = solve_sequential(&forecast, &actual, &cfg, &BranchOptions::default(), 0).unwrap();
    let joint = build_joint(&forecast, &actual, &cfg).unwrap().solve().unwrap();
    assert!(joint.c_star <= seq.cost.total() + 1e-9 * (1.0 + seq.cost.total()));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn more_demand_never_costs_less(k in 0usize..LOAD_SLOTS, delta in 1.0f64..200.0) {
        let cfg = default_hub();
        let m = profile(2300.0, 1300.0, 3800.0);
        let base = build_day_ahead(&m, &cfg).unwrap();
        let c0 = base.solve().unwrap().c_star;
        let mut mp = m.clone();
        mp[k] += delta;
        let c1 = base.with_params(&mp).unwrap().solve().unwrap().c_star;
        prop_assert!(c1 >= c0 - 1e-9 * (1.0 + c0.abs()), "slot {}: {} < {}", k, c1, c0);
    }

    #[test]
    fn perfect_forecast_is_a_lower_bound(scale in proptest::collection::vec(0.9f64..1.1, LOAD_SLOTS)) {
        let cfg = toy(true);
        let actual = profile(800.0, 500.0, 1200.0);
        let forecast: Vec<f64> = actual.iter().zip(&scale).map(|(a, s)| a * s).collect();
        let p = build_joint(&forecast, &actual, &cfg).unwrap();
        let ideal = p.with_params(&actual).unwrap().solve().unwrap().c_star;
        let other = p.solve().unwrap();
        if other.is_optimal() {
            prop_assert!(ideal <= other.c_star + 1e-9 * (1.0 + ideal.abs()));
        }
    }
}
