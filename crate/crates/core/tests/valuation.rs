use std::path::{Path, PathBuf};

use mesval::experiment::{Experiment, ExperimentConfig};
use mesval::forecast::Forecaster;
use mesval::hub::{CarrierPrices, IntraDaySeries, Series};
use mesval::valuation::*;
use mesval::Error;
use proptest::prelude::*;

/// Published coalition costs (kCNY) in table order ehc, eh, ec, hc, e, h, c, ∅.
const TABLE_COSTS: [f64; 8] = [31294.04, 31291.83, 31311.15, 31403.95, 31412.30, 31314.79, 31410.94, 31418.71];
/// Published coalition values, same order.
const TABLE_VALUES: [f64; 8] = [124.66, 126.87, 107.56, 14.76, 6.40, 103.92, 7.77, 0.0];
/// One unit of the last printed digit, plus float slack.
const PRINTED_TOL: f64 = 0.01 + 1e-9;

/// Averages clipped marginal contributions over every arrival order.
fn permutation_oracle(values: &[f64], n: usize) -> Vec<f64> {
    fn orders(rest: Vec<usize>, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..rest.len() {
            let mut r = rest.clone();
            let p = r.remove(k);
            prefix.push(p);
            orders(r, prefix, out);
            prefix.pop();
        }
    }
    let mut all = Vec::new();
    orders((0..n).collect(), &mut Vec::new(), &mut all);
    let mut v = vec![0.0; n];
    for order in &all {
        let mut s = 0usize;
        for &p in order {
            v[p] += (values[s | 1 << p] - values[s]).max(0.0);
            s |= 1 << p;
        }
    }
    v.iter().map(|x| x / all.len() as f64).collect()
}

fn table_ledger() -> CoalitionLedger {
    CoalitionLedger::from_costs(&TABLE_COSTS).unwrap()
}

#[test]
fn coalition_labels_and_order() {
    let order: Vec<String> = Coalition::table_order(3).iter().map(|c| c.to_string()).collect();
    assert_eq!(order, ["ehc", "eh", "ec", "hc", "e", "h", "c", "none"]);
    assert_eq!(Coalition::parse("he", &SECTOR_LABELS).unwrap(), Coalition(0b011));
    assert_eq!(Coalition::parse("none", &SECTOR_LABELS).unwrap(), Coalition::EMPTY);
    assert!(Coalition::parse("ex", &SECTOR_LABELS).is_err());
    assert_eq!(Coalition::full(3).len(), 3);
}

#[test]
fn table_values_follow_from_costs() {
    let ledger = table_ledger();
    for (c, want) in Coalition::table_order(3).iter().zip(TABLE_VALUES) {
        let got = ledger.value(*c).unwrap();
        assert!((got - want).abs() <= PRINTED_TOL, "{c}: {got} vs {want}");
    }
    assert_eq!(ledger.value(Coalition::EMPTY).unwrap(), 0.0);
    assert!((ledger.value(Coalition(0b011)).unwrap() - 126.88).abs() < 1e-9);
    assert!((ledger.value(Coalition(0b010)).unwrap() - 103.92).abs() < 1e-9);
}

#[test]
fn table_value_row_allocation() {
    let mut values = vec![0.0; 8];
    for (c, v) in Coalition::table_order(3).iter().zip(TABLE_VALUES) {
        values[c.index()] = v;
    }
    let raw = zero_shapley(&values, 3).unwrap();
    let oracle = permutation_oracle(&values, 3);
    for n in 0..3 {
        assert!((raw[n] - oracle[n]).abs() < 1e-12);
    }
    let frozen = [59.223333333333333, 61.583333333333336, 19.45];
    for n in 0..3 {
        assert!((raw[n] - frozen[n]).abs() < 1e-9, "{raw:?}");
    }
    let alloc = normalize_allocation(&raw, values[7]).unwrap();
    assert!((alloc.payouts.iter().sum::<f64>() - 124.66).abs() < 1e-9);
    let frozen = [52.637645744706, 54.735211635811, 17.287142619483];
    for n in 0..3 {
        assert!((alloc.payouts[n] - frozen[n]).abs() < 1e-9, "{:?}", alloc.payouts);
    }
}

#[test]
fn shapley_examples() {
    let additive: Vec<f64> = (0..8u32).map(|m| m.count_ones() as f64).collect();
    assert_eq!(zero_shapley(&additive, 3).unwrap(), vec![1.0, 1.0, 1.0]);

    // Sector 1 adds nothing anywhere.
    let dummy = [0.0, 3.0, 0.0, 3.0, 5.0, 9.0, 5.0, 9.0];
    assert_eq!(zero_shapley(&dummy, 3).unwrap()[1], 0.0);

    assert!(matches!(zero_shapley(&additive[..7], 3), Err(Error::Valuation(_))));
    assert!(zero_shapley(&[1.0, 2.0], 1).is_err());
    assert!(zero_shapley(&[0.0; 2], 21).is_err());
}

#[test]
fn normalization_examples() {
    assert_eq!(normalize_allocation(&[1.0, 1.0, 2.0], 8.0).unwrap().payouts, vec![2.0, 2.0, 4.0]);
    assert_eq!(normalize_allocation(&[5.0, 0.0, 0.0], 7.0).unwrap().payouts, vec![7.0, 0.0, 0.0]);
    assert_eq!(normalize_allocation(&[0.0; 3], 0.0).unwrap().payouts, vec![0.0; 3]);
    assert!(normalize_allocation(&[1.0, -1e-3, 0.0], 1.0).is_err());
}

#[test]
fn ledger_requires_every_entry() {
    let mut ledger = CoalitionLedger::new(&SECTOR_LABELS);
    assert!(ledger.value(Coalition::EMPTY).is_err());
    ledger.record(Coalition::EMPTY, 10.0, None).unwrap();
    assert_eq!(ledger.value(Coalition::EMPTY).unwrap(), 0.0);
    assert!(!ledger.is_complete());
    assert!(ledger.allocate().is_err());
    assert!(ledger.record(Coalition(9), 1.0, None).is_err());
}

#[test]
fn ledger_csv_and_table() {
    let ledger = table_ledger();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.csv");
    ledger.to_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 9);
    assert_eq!(lines[0], "coalition,cost_kcny,value_kcny");
    assert!(lines[1].starts_with("ehc,31294.040000,124.67"));
    assert!(lines[8].starts_with("none,31418.710000,0.000000"));
    let table = ledger.summary_table().unwrap();
    assert!(table.contains("126.88") && table.contains("31418.71"));
}

fn value_map(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-50.0..100.0f64, (1 << n) - 1).prop_map(|mut v| {
        v.insert(0, 0.0);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn enumeration_matches_permutation_oracle(n in 3usize..=4, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut values: Vec<f64> = (0..1 << n).map(|_| rng.gen_range(-50.0..100.0)).collect();
        values[0] = 0.0;
        let raw = zero_shapley(&values, n).unwrap();
        let oracle = permutation_oracle(&values, n);
        for p in 0..n {
            prop_assert!((raw[p] - oracle[p]).abs() < 1e-12);
            prop_assert!(raw[p] >= 0.0);
        }
    }

    #[test]
    fn budget_balance(values in value_map(4)) {
        let alloc = normalize_allocation(&zero_shapley(&values, 4).unwrap(), values[15]).unwrap();
        let total: f64 = alloc.raw.iter().sum();
        if total > 0.0 {
            prop_assert!((alloc.payouts.iter().sum::<f64>() - values[15]).abs() <= 1e-9);
        } else {
            prop_assert!(alloc.payouts.iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn dummy_sector_gets_nothing(base in value_map(2), dummy in 0usize..3) {
        // Insert a sector whose presence never changes the value.
        let values: Vec<f64> = (0..8usize)
            .map(|m| {
                let low = m & ((1 << dummy) - 1);
                let high = (m >> (dummy + 1)) << dummy;
                base[low | high]
            })
            .collect();
        let alloc = normalize_allocation(&zero_shapley(&values, 3).unwrap(), values[7]).unwrap();
        prop_assert_eq!(alloc.raw[dummy], 0.0);
        prop_assert_eq!(alloc.payouts[dummy], 0.0);
    }

    #[test]
    fn symmetric_sectors_get_equal_payouts(v in proptest::collection::vec(-50.0..100.0f64, 6)) {
        // Sectors 0 and 1 are interchangeable: V depends on how many of them are in S.
        let by_count = |m: usize| (m & 1) + (m >> 1 & 1);
        let values: Vec<f64> = (0..8usize)
            .map(|m| if m == 0 { 0.0 } else { v[by_count(m) + 3 * (m >> 2)] })
            .collect();
        let alloc = normalize_allocation(&zero_shapley(&values, 3).unwrap(), values[7]).unwrap();
        prop_assert!((alloc.raw[0] - alloc.raw[1]).abs() < 1e-12);
        prop_assert!((alloc.payouts[0] - alloc.payouts[1]).abs() < 1e-9);
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Four training and two test days on the default hub.
fn small_experiment() -> Experiment {
    let text = r#"
        seed = 3
        hub = "hub.toml"
        [segments]
        chp = 1
        [data.synthetic]
        days = 7
        start = "2024-07-01"
        [split]
        train_start = "2024-07-02"
        test_start = "2024-07-06"
        test_end = "2024-07-08"
        [training]
        hidden = 4
        optimizer = "adam"
        lr = 0.02
        epochs_mse = 40
        lr_e2e = 1e-5
        epochs_e2e = 1
    "#;
    Experiment::from_config(ExperimentConfig::from_toml_str(text).unwrap(), &configs_dir()).unwrap()
}

#[test]
fn experiment_resolves_split_and_overrides() {
    let exp = small_experiment();
    assert_eq!(exp.train_days, vec![1, 2, 3, 4]);
    assert_eq!(exp.test_days, vec![5, 6]);
    assert_eq!(exp.hub.converter("chp").unwrap().1.segments, 1);
    assert_ne!(exp.model_seed(0), exp.model_seed(1));

    let mut cfg = exp.config.clone();
    cfg.split.test_end = "2024-07-09".parse().unwrap();
    assert!(matches!(Experiment::from_config(cfg, &configs_dir()), Err(Error::Config(_))));
    let mut cfg = exp.config.clone();
    cfg.split.train_start = "2024-07-01".parse().unwrap();
    assert!(Experiment::from_config(cfg, &configs_dir()).is_err());
    let mut cfg = exp.config.clone();
    cfg.segments.insert("turbine".into(), 2);
    assert!(Experiment::from_config(cfg, &configs_dir()).is_err());
}

#[test]
fn pipeline_degenerate_cases() {
    let exp = small_experiment();
    let opts = exp.branch_options();
    let base = train_base_for(&exp).unwrap();
    assert_eq!(base, train_base_for(&exp).unwrap());

    let empty = evaluate_cost(&base, &exp.series, &[], &exp.hub, exp.config.mode, &opts).unwrap();
    assert_eq!(empty.total_kcny(), 0.0);

    let c0 = evaluate_cost(&base, &exp.series, &exp.test_days, &exp.hub, exp.config.mode, &opts).unwrap();
    let none = train_end_to_end(Coalition::EMPTY, &base, &exp.series, &exp.train_days, &exp.hub, &exp.config.training, &opts)
        .unwrap();
    assert_eq!(none.models, base);
    let again = evaluate_cost(&none.models, &exp.series, &exp.test_days, &exp.hub, exp.config.mode, &opts).unwrap();
    assert_eq!(again.total_kcny().to_bits(), c0.total_kcny().to_bits());

    let mut cfg = exp.config.training.clone();
    cfg.epochs_e2e = 0;
    let run = train_end_to_end(Coalition::full(3), &base, &exp.series, &exp.train_days, &exp.hub, &cfg, &opts).unwrap();
    assert_eq!(run.models, base);

    assert!(evaluate_cost(&base[..2], &exp.series, &exp.test_days, &exp.hub, exp.config.mode, &opts).is_err());
}

#[test]
fn coalition_training_touches_only_members() {
    let exp = small_experiment();
    let opts = exp.branch_options();
    let base = train_base_for(&exp).unwrap();
    let mut cfg = exp.config.training.clone();
    cfg.select_best = false;
    let run = train_end_to_end(Coalition(0b101), &base, &exp.series, &exp.train_days, &exp.hub, &cfg, &opts).unwrap();
    assert_eq!(run.models[1], base[1]);
    assert_ne!(run.models[0].params, base[0].params);
    assert_ne!(run.models[2].params, base[2].params);
    assert_eq!(run.epoch_costs.len(), 2);
    assert!(run.violations.is_empty());

    // With selection the returned models never cost more on the training days.
    let best = train_end_to_end(Coalition(0b101), &base, &exp.series, &exp.train_days, &exp.hub, &exp.config.training, &opts)
        .unwrap();
    let chosen = best.epoch_costs[best.selected_epoch];
    assert!(best.epoch_costs.iter().all(|&c| chosen <= c));
}

#[test]
fn ideal_forecast_lower_bounds_and_matches_day_ahead() {
    let exp = small_experiment();
    let opts = exp.branch_options();
    let base = train_base_for(&exp).unwrap();
    let ideal = evaluate_ideal(&exp.series, &exp.test_days, &exp.hub, exp.config.mode, &opts).unwrap();
    let c0 = evaluate_cost(&base, &exp.series, &exp.test_days, &exp.hub, exp.config.mode, &opts).unwrap();
    assert!(ideal.total_kcny() <= c0.total_kcny() + 1e-9);
    assert!(ideal.invariants_ok() && c0.invariants_ok());
    let seq = evaluate_ideal(&exp.series, &exp.test_days, &exp.hub, mesval::experiment::EvalMode::Sequential, &opts)
        .unwrap();
    assert!((seq.total_kcny() - ideal.total_kcny()).abs() <= 1e-9 * ideal.total_kcny());
    let months = c0.monthly_kcny();
    assert_eq!(months.len(), 1);
    assert!((months[0].1 - c0.total_kcny()).abs() < 1e-9);
}

#[test]
fn forecast_independent_costs_give_zero_payouts() {
    let mut exp = small_experiment();
    exp.config.training.epochs_mse = 5;
    let zero = Series::Flat(0.0);
    exp.hub.prices.day_ahead = CarrierPrices {
        electricity: zero.clone(),
        gas: zero.clone(),
    };
    exp.hub.prices.intra_day = CarrierPrices {
        electricity: IntraDaySeries::Direct(zero.clone()),
        gas: IntraDaySeries::Direct(zero),
    };
    exp.hub.prices.require_intra_day_premium = false;
    for s in &mut exp.hub.storages {
        s.charge_cost = 0.0;
        s.discharge_cost = 0.0;
    }
    let base: Vec<Forecaster> = train_base_for(&exp).unwrap();
    let out = full_valuation(&exp, &base).unwrap();
    assert!(out.ledger.values().unwrap().iter().all(|&v| v == 0.0));
    assert_eq!(out.allocation.payouts, vec![0.0; 3]);
    assert!(out.invariants_ok());
}
