//! Base training, cost evaluation, coalition end-to-end training and the
//! full valuation run.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use log::{debug, info, warn};
use nalgebra::DMatrix;

use super::game::{Allocation, Coalition, CoalitionLedger, SECTOR_LABELS};
use crate::data::LoadSeries;
use crate::diff::GradientRoute;
use crate::error::{Error, Result};
use crate::experiment::{EvalMode, Experiment};
use crate::forecast::{
    apply_external_gradient, day_window, metrics, sector_samples, train_mse, DayCache, ForecastMetrics, Forecaster,
    Normalization, TrainingConfig,
};
use crate::hub::{
    build_joint, check_dispatch, dispatch_cost, solve_sequential, CostBreakdown, DispatchProblem, HubConfig,
    InvariantTolerances, HOURS, LOAD_SLOTS, SECTORS,
};
use crate::milp::{backward_optimal_subproblem, BranchOptions};

/// One day of an evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DayCost {
    pub day: usize,
    pub date: NaiveDate,
    /// CNY.
    pub cost: CostBreakdown,
    pub nodes: usize,
}

/// Per-day costs and invariant checks of one evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostReport {
    pub days: Vec<DayCost>,
    /// Solved dispatch problems that were checked.
    pub checked: usize,
    pub violations: Vec<String>,
}

impl CostReport {
    pub fn total_kcny(&self) -> f64 {
        self.days.iter().map(|d| d.cost.total()).sum::<f64>() / 1000.0
    }

    /// `(YYYY-MM, kCNY)` in date order.
    pub fn monthly_kcny(&self) -> Vec<(String, f64)> {
        let mut months: BTreeMap<String, f64> = BTreeMap::new();
        for d in &self.days {
            *months.entry(d.date.format("%Y-%m").to_string()).or_default() += d.cost.total() / 1000.0;
        }
        months.into_iter().collect()
    }

    pub fn invariants_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_models(models: &[Forecaster]) -> Result<()> {
    if models.len() != SECTORS || models.iter().enumerate().any(|(n, m)| m.sector != n) {
        return Err(Error::Valuation(format!(
            "need one forecaster per sector in sector order, got {}",
            models.len()
        )));
    }
    Ok(())
}

/// Forecasts of all sectors for `day`, in hub slot order.
pub fn day_forecasts(models: &[Forecaster], series: &LoadSeries, day: usize) -> Result<Vec<f64>> {
    check_models(models)?;
    let mut out = Vec::with_capacity(LOAD_SLOTS);
    for m in models {
        out.extend(m.forecast_day(series, day)?);
    }
    Ok(out)
}

fn solve_joint_day(problem: &DispatchProblem, opts: &BranchOptions, day: usize) -> Result<crate::milp::MilpResult> {
    let r = problem.solve_with(opts)?;
    if !r.is_optimal() {
        return Err(Error::Infeasible {
            stage: "joint".into(),
            day,
        });
    }
    Ok(r)
}

/// Dispatch cost over `days` for forecasts produced by `forecast`.
pub fn evaluate_days(
    series: &LoadSeries,
    days: &[usize],
    hub: &HubConfig,
    mode: EvalMode,
    opts: &BranchOptions,
    mut forecast: impl FnMut(usize) -> Result<Vec<f64>>,
) -> Result<CostReport> {
    let tol = InvariantTolerances::default();
    let mut report = CostReport::default();
    for &day in days {
        let actual = series.day(day)?;
        let fc = forecast(day)?;
        let date = series.date(day).expect("day inside series");
        let (cost, nodes) = match mode {
            EvalMode::Joint => {
                let p = build_joint(&fc, &actual, hub)?;
                let r = solve_joint_day(&p, opts, day)?;
                let inv = check_dispatch(&p, &r.z_star, &tol);
                report.checked += 1;
                report.violations.extend(inv.violations.iter().map(|v| format!("day {day}: {v}")));
                (dispatch_cost(&p, &r.z_star), r.node_count)
            }
            EvalMode::Sequential => {
                let out = solve_sequential(&fc, &actual, hub, opts, day)?;
                let da = crate::hub::build_day_ahead(&fc, hub)?;
                let id = crate::hub::build_intra_day(&out.plan, &actual, hub)?;
                for (p, z) in [(&da, &out.day_ahead.z_star), (&id, &out.intra_day.z_star)] {
                    let inv = check_dispatch(p, z, &tol);
                    report.checked += 1;
                    report.violations.extend(inv.violations.iter().map(|v| format!("day {day}: {v}")));
                }
                (out.cost, out.day_ahead.node_count + out.intra_day.node_count)
            }
        };
        debug!("day {day} ({date}): {:.2} CNY, {nodes} nodes", cost.total());
        report.days.push(DayCost { day, date, cost, nodes });
    }
    Ok(report)
}

/// Total dispatch cost of `days` with forecasts from `models`.
pub fn evaluate_cost(
    models: &[Forecaster],
    series: &LoadSeries,
    days: &[usize],
    hub: &HubConfig,
    mode: EvalMode,
    opts: &BranchOptions,
) -> Result<CostReport> {
    check_models(models)?;
    evaluate_days(series, days, hub, mode, opts, |d| day_forecasts(models, series, d))
}

/// Cost with forecasts equal to the actual loads.
pub fn evaluate_ideal(
    series: &LoadSeries,
    days: &[usize],
    hub: &HubConfig,
    mode: EvalMode,
    opts: &BranchOptions,
) -> Result<CostReport> {
    evaluate_days(series, days, hub, mode, opts, |d| series.day(d))
}

/// MSE-trained forecaster per sector, scaled to the training loads.
pub fn train_base(
    series: &LoadSeries,
    train_days: &[usize],
    cfg: &TrainingConfig,
    seeds: [u64; SECTORS],
) -> Result<(Vec<Forecaster>, Vec<Vec<f64>>)> {
    let mut models = Vec::with_capacity(SECTORS);
    let mut traces = Vec::with_capacity(SECTORS);
    for (sector, &seed) in seeds.iter().enumerate() {
        let loads: Vec<f64> = train_days
            .iter()
            .flat_map(|&d| series.loads[sector][d * HOURS..(d + 1) * HOURS].iter().copied())
            .collect();
        let norm = Normalization::fit(&loads);
        let init = Forecaster::new(sector, cfg.hidden, cfg.window, norm, seed);
        let samples = sector_samples(series, sector, train_days, cfg.window, &norm)?;
        let (model, trace) = train_mse(&init, &samples, cfg)?;
        info!(
            "base {}: loss {:.3e} -> {:.3e}",
            SECTOR_LABELS[sector],
            trace.first().unwrap(),
            trace.last().unwrap()
        );
        models.push(model);
        traces.push(trace);
    }
    Ok((models, traces))
}

/// Base models of an experiment.
pub fn train_base_for(exp: &Experiment) -> Result<Vec<Forecaster>> {
    let seeds = std::array::from_fn(|n| exp.model_seed(n));
    Ok(train_base(&exp.series, &exp.train_days, &exp.config.training, seeds)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2eRun {
    pub coalition: Coalition,
    pub models: Vec<Forecaster>,
    /// Joint training cost (kCNY) before training and after every epoch.
    pub epoch_costs: Vec<f64>,
    /// Epoch whose models were returned (0 = the initial models).
    pub selected_epoch: usize,
    /// Days whose gradient fell back to the dual subgradient.
    pub degenerate: usize,
    pub checked: usize,
    pub violations: Vec<String>,
}

struct TrainingDays {
    problems: Vec<DispatchProblem>,
    /// `[day][sector]`
    windows: Vec<Vec<DMatrix<f64>>>,
}

impl TrainingDays {
    fn new(models: &[Forecaster], series: &LoadSeries, days: &[usize], hub: &HubConfig) -> Result<Self> {
        let mut problems = Vec::with_capacity(days.len());
        let mut windows = Vec::with_capacity(days.len());
        for &d in days {
            let w: Vec<DMatrix<f64>> = models
                .iter()
                .map(|m| day_window(series, m.sector, d, m.window, &m.norm))
                .collect::<Result<_>>()?;
            let fc = day_forecasts(models, series, d)?;
            problems.push(build_joint(&fc, &series.day(d)?, hub)?);
            windows.push(w);
        }
        Ok(Self { problems, windows })
    }

    fn forward(&self, models: &[Forecaster], k: usize) -> Result<(Vec<DayCache>, Vec<f64>)> {
        let caches: Vec<DayCache> = models
            .iter()
            .zip(&self.windows[k])
            .map(|(m, w)| m.forward(w))
            .collect::<Result<_>>()?;
        let fc = caches.iter().flat_map(|c| c.forecast.iter().copied()).collect();
        Ok((caches, fc))
    }
}

/// Joint cost (kCNY) of the training days, with invariant checks.
fn training_cost(
    models: &[Forecaster],
    td: &TrainingDays,
    days: &[usize],
    opts: &BranchOptions,
    run: &mut E2eRun,
) -> Result<f64> {
    let tol = InvariantTolerances::default();
    let mut total = 0.0;
    for (k, &day) in days.iter().enumerate() {
        let (_, fc) = td.forward(models, k)?;
        let p = td.problems[k].with_params(&fc)?;
        let r = solve_joint_day(&p, opts, day)?;
        let inv = check_dispatch(&p, &r.z_star, &tol);
        run.checked += 1;
        run.violations.extend(inv.violations.iter().map(|v| format!("day {day}: {v}")));
        total += r.c_star;
    }
    Ok(total / 1000.0)
}

/// End-to-end training of the sectors in `coalition`; the others keep their
/// initial parameters. Each training day solves the joint dispatch for the
/// current forecasts, differentiates the optimal sub-problem and takes one
/// descent step per member sector.
pub fn train_end_to_end(
    coalition: Coalition,
    initial: &[Forecaster],
    series: &LoadSeries,
    train_days: &[usize],
    hub: &HubConfig,
    cfg: &TrainingConfig,
    opts: &BranchOptions,
) -> Result<E2eRun> {
    check_models(initial)?;
    cfg.validate()?;
    let mut run = E2eRun {
        coalition,
        models: initial.to_vec(),
        epoch_costs: Vec::new(),
        selected_epoch: 0,
        degenerate: 0,
        checked: 0,
        violations: Vec::new(),
    };
    if coalition.is_empty() || cfg.epochs_e2e == 0 || train_days.is_empty() {
        return Ok(run);
    }
    let td = TrainingDays::new(initial, series, train_days, hub)?;
    let tol = InvariantTolerances::default();
    let mut current = initial.to_vec();
    let mut best = training_cost(&current, &td, train_days, opts, &mut run)?;
    run.epoch_costs.push(best);
    for epoch in 1..=cfg.epochs_e2e {
        for (k, &day) in train_days.iter().enumerate() {
            let (caches, fc) = td.forward(&current, k)?;
            let p = td.problems[k].with_params(&fc)?;
            let r = solve_joint_day(&p, opts, day)?;
            let inv = check_dispatch(&p, &r.z_star, &tol);
            run.checked += 1;
            run.violations.extend(inv.violations.iter().map(|v| format!("day {day}: {v}")));
            let g = backward_optimal_subproblem(&r, &p.params, GradientRoute::Auto)?;
            if g.degenerate {
                run.degenerate += 1;
                warn!("day {day}: degenerate optimum, using the dual gradient");
            }
            for n in (0..SECTORS).filter(|&n| coalition.contains(n)) {
                let g_n = &g.dcost_dm.as_slice()[n * HOURS..(n + 1) * HOURS];
                current[n].params = apply_external_gradient(&current[n].params, g_n, &caches[n], cfg.lr_e2e)?;
            }
            if !current.iter().all(|m| m.params.is_finite()) {
                return Err(Error::Forecast(format!("end-to-end step on day {day} diverged")));
            }
        }
        let cost = training_cost(&current, &td, train_days, opts, &mut run)?;
        info!("e2e {coalition} epoch {epoch}: training cost {cost:.4} kCNY");
        run.epoch_costs.push(cost);
        if !cfg.select_best || cost < best {
            best = cost;
            run.selected_epoch = epoch;
            run.models = current.clone();
        }
    }
    Ok(run)
}

/// Accuracy per sector over `days`.
pub fn sector_metrics(models: &[Forecaster], series: &LoadSeries, days: &[usize]) -> Result<Vec<ForecastMetrics>> {
    check_models(models)?;
    models
        .iter()
        .map(|m| {
            let mut f = Vec::with_capacity(days.len() * HOURS);
            let mut a = Vec::with_capacity(days.len() * HOURS);
            for &d in days {
                f.extend(m.forecast_day(series, d)?);
                a.extend_from_slice(&series.loads[m.sector][d * HOURS..(d + 1) * HOURS]);
            }
            metrics(&f, &a)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValuationOutcome {
    pub base: Vec<Forecaster>,
    pub ledger: CoalitionLedger,
    pub allocation: Allocation,
    /// In mask order.
    pub runs: Vec<E2eRun>,
    /// Test-split evaluation per coalition, in mask order.
    pub test: Vec<CostReport>,
    pub ideal: CostReport,
}

impl ValuationOutcome {
    pub fn invariants_ok(&self) -> bool {
        self.ideal.invariants_ok()
            && self.test.iter().all(CostReport::invariants_ok)
            && self.runs.iter().all(|r| r.violations.is_empty())
    }
}

/// Every coalition's end-to-end run from the same base models, the ledger of
/// test costs, and the allocation.
pub fn full_valuation(exp: &Experiment, base: &[Forecaster]) -> Result<ValuationOutcome> {
    let opts = exp.branch_options();
    let mode = exp.config.mode;
    let mut ledger = CoalitionLedger::new(&SECTOR_LABELS);
    let mut runs = Vec::new();
    let mut test = Vec::new();
    for mask in 0..1u32 << SECTORS {
        let c = Coalition(mask);
        let run = train_end_to_end(c, base, &exp.series, &exp.train_days, &exp.hub, &exp.config.training, &opts)?;
        let report = evaluate_cost(&run.models, &exp.series, &exp.test_days, &exp.hub, mode, &opts)?;
        info!("coalition {c}: test cost {:.4} kCNY", report.total_kcny());
        ledger.record(c, report.total_kcny(), Some(run.models.clone()))?;
        runs.push(run);
        test.push(report);
    }
    let allocation = ledger.allocate()?;
    let ideal = evaluate_ideal(&exp.series, &exp.test_days, &exp.hub, mode, &opts)?;
    Ok(ValuationOutcome {
        base: base.to_vec(),
        ledger,
        allocation,
        runs,
        test,
        ideal,
    })
}
