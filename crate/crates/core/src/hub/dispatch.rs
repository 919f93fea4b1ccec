//! Day-ahead, intra-day and joint dispatch problems.
//!
//! Each stage copy has one flow variable per branch and hour, a piecewise
//! block per converter and hour, and a state of charge per storage and hour.
//! The intra-day copy balances actual loads. Its storage branches are extra
//! actions on top of the day-ahead schedule, and its input purchases differ
//! from the day-ahead ones by priced up/down adjustments. Converter inputs
//! stay within the reserves around their day-ahead setpoints.

use std::ops::Range;

use nalgebra::DVector;

use super::config::{slot, HubConfig, NodeKind, PriceSchedule, HOURS, SECTORS};
use super::piecewise::{linearize_converter, EmittedBlock, PiecewiseBlock};
use super::topology::{build_hub_matrices, HubMatrices};
use crate::error::{Error, Result};
use crate::lp::{LpBuilder, RowSense, VarId};
use crate::milp::{branch_and_bound, branch_and_bound_with, BranchOptions, MilpProblem, MilpResult};

/// Forecast or actual loads for one day, `sector·24 + hour` (kW).
pub const LOAD_SLOTS: usize = SECTORS * HOURS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    DayAhead,
    IntraDay,
    Joint,
}

/// Which part of the objective a variable's cost belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostClass {
    None,
    DayAhead,
    IntraDay,
    Storage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageVars {
    /// `[hour][branch]`
    pub flow: Vec<Vec<VarId>>,
    /// `[hour][converter]`
    pub blocks: Vec<Vec<EmittedBlock>>,
    /// `[hour][storage]`
    pub soc: Vec<Vec<VarId>>,
    /// `[hour][storage]`, charge-mode binary when the storage is exclusive.
    pub mode: Vec<Vec<Option<VarId>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adjustment {
    pub up: VarId,
    pub down: VarId,
}

/// An equality row that pins a load branch to a forecast or actual value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadRow {
    pub stage: Stage,
    pub eq_row: usize,
    pub sector: usize,
    pub hour: usize,
}

/// Day-ahead setpoints the intra-day stage is measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct DayAheadPlan {
    /// `[hour][converter]` total input (kW).
    pub converter_input: Vec<Vec<f64>>,
    /// `[hour][input node]` purchase (kW).
    pub purchase: Vec<Vec<f64>>,
    /// `[hour][storage]`
    pub charge: Vec<Vec<f64>>,
    pub discharge: Vec<Vec<f64>>,
}

/// Node and branch indices the builders need.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub converter_node: Vec<usize>,
    pub storage_node: Vec<usize>,
    pub charge_branch: Vec<usize>,
    pub discharge_branch: Vec<usize>,
    pub input_nodes: Vec<usize>,
    /// `[sector]`
    pub load_node: Vec<usize>,
}

impl Layout {
    fn new(cfg: &HubConfig, mats: &HubMatrices) -> Result<Self> {
        let topo = &mats.topology;
        let find = |kind: NodeKind, spec: usize| {
            topo.nodes
                .iter()
                .position(|n| n.kind == kind && n.spec == Some(spec))
                .expect("validated topology places every spec")
        };
        let converter_node: Vec<usize> = (0..cfg.converters.len()).map(|c| find(NodeKind::Converter, c)).collect();
        let storage_node: Vec<usize> = (0..cfg.storages.len()).map(|s| find(NodeKind::Storage, s)).collect();
        let charge_branch = storage_node.iter().map(|&n| topo.incoming(n).next().unwrap()).collect();
        let discharge_branch = storage_node.iter().map(|&n| topo.outgoing(n).next().unwrap()).collect();
        let mut load_node = Vec::with_capacity(SECTORS);
        for s in 0..SECTORS {
            match topo.load_node(s) {
                Some(n) => load_node.push(n),
                None => return Err(Error::Hub(format!("no load node for sector {s}"))),
            }
        }
        Ok(Self {
            converter_node,
            storage_node,
            charge_branch,
            discharge_branch,
            input_nodes: mats.input_nodes.clone(),
            load_node,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchProblem {
    pub stage: Stage,
    pub milp: MilpProblem,
    /// Parameter vector the problem was built for.
    pub params: DVector<f64>,
    pub forecast_slots: Option<Range<usize>>,
    pub actual_slots: Option<Range<usize>>,
    pub day_ahead: Option<StageVars>,
    pub intra_day: Option<StageVars>,
    /// `[hour][input node]`
    pub adjustments: Vec<Vec<Adjustment>>,
    /// Fixed setpoints of a stand-alone intra-day problem.
    pub plan: Option<DayAheadPlan>,
    pub cost_class: Vec<CostClass>,
    pub load_rows: Vec<LoadRow>,
    pub layout: Layout,
    pub blocks: Vec<PiecewiseBlock>,
    pub matrices: HubMatrices,
    pub prices: PriceSchedule,
    pub config: HubConfig,
}

/// Dispatch cost split by origin (CNY).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    /// Day-ahead purchases.
    pub day_ahead: f64,
    /// Intra-day purchases minus refunds.
    pub intra_day: f64,
    /// Charge and discharge costs of both stages.
    pub storage: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.day_ahead + self.intra_day + self.storage
    }
}

impl std::ops::Add for CostBreakdown {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            day_ahead: self.day_ahead + o.day_ahead,
            intra_day: self.intra_day + o.intra_day,
            storage: self.storage + o.storage,
        }
    }
}

fn check_loads(loads: &[f64], what: &str) -> Result<()> {
    if loads.len() != LOAD_SLOTS {
        return Err(Error::Hub(format!("{what}: expected {LOAD_SLOTS} values, got {}", loads.len())));
    }
    if let Some(i) = loads.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Hub(format!(
            "{what}: entry {i} (sector {}, hour {}) is {}, loads must be finite and non-negative",
            i / HOURS,
            i % HOURS,
            loads[i]
        )));
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Loads<'a> {
    Slots,
    Values(&'a [f64]),
}

/// Day-ahead quantities seen from the intra-day stage.
#[derive(Clone, Copy)]
enum DaRef<'a> {
    Vars(&'a StageVars),
    Plan(&'a DayAheadPlan),
}

/// Linear expression `Σ a·v + constant`.
#[derive(Default)]
struct Lin {
    terms: Vec<(VarId, f64)>,
    constant: f64,
}

impl Lin {
    fn add(&mut self, v: VarId, a: f64) {
        self.terms.push((v, a));
    }
}

struct Assembler<'a> {
    cfg: &'a HubConfig,
    mats: &'a HubMatrices,
    layout: &'a Layout,
    prices: &'a PriceSchedule,
    blocks: &'a [PiecewiseBlock],
    b: LpBuilder,
    ints: Vec<usize>,
    class: Vec<CostClass>,
    load_rows: Vec<LoadRow>,
}

impl<'a> Assembler<'a> {
    fn var(&mut self, name: String, lo: f64, hi: f64, cost: f64, class: CostClass) -> VarId {
        self.class.push(class);
        self.b.add_var(name, lo, hi, cost)
    }

    /// Adds `expr (sense) rhs + params`, moving the constant to the right.
    fn row(&mut self, expr: &Lin, sense: RowSense, rhs: f64, params: &[(usize, f64)]) -> usize {
        self.b.add_row(&expr.terms, sense, rhs - expr.constant, params)
    }

    fn da_converter_input(&self, da: DaRef, t: usize, c: usize, into: &mut Lin, sign: f64) {
        match da {
            DaRef::Vars(v) => {
                for br in self.mats.topology.incoming(self.layout.converter_node[c]) {
                    into.add(v.flow[t][br], sign);
                }
            }
            DaRef::Plan(p) => into.constant += sign * p.converter_input[t][c],
        }
    }

    fn da_purchase(&self, da: DaRef, t: usize, i: usize, into: &mut Lin, sign: f64) {
        match da {
            DaRef::Vars(v) => {
                for br in self.mats.topology.outgoing(self.layout.input_nodes[i]) {
                    into.add(v.flow[t][br], sign);
                }
            }
            DaRef::Plan(p) => into.constant += sign * p.purchase[t][i],
        }
    }

    /// Day-ahead storage charge (`charge = true`) or discharge.
    fn da_storage(&self, da: DaRef, t: usize, s: usize, charge: bool, into: &mut Lin, sign: f64) {
        match da {
            DaRef::Vars(v) => {
                let br = if charge {
                    self.layout.charge_branch[s]
                } else {
                    self.layout.discharge_branch[s]
                };
                into.add(v.flow[t][br], sign);
            }
            DaRef::Plan(p) => {
                into.constant += sign * if charge { p.charge[t][s] } else { p.discharge[t][s] };
            }
        }
    }

    /// One stage copy. `da` is `None` for the day-ahead stage.
    fn stage(&mut self, loads: Loads, da: Option<DaRef>) -> StageVars {
        let topo = &self.mats.topology;
        let tag = if da.is_none() { "da" } else { "id" };
        let nb = topo.branches.len();
        let mut flow = Vec::with_capacity(HOURS);
        let mut blocks = Vec::with_capacity(HOURS);
        let mut soc: Vec<Vec<VarId>> = Vec::with_capacity(HOURS);
        let mut mode = Vec::with_capacity(HOURS);

        for t in 0..HOURS {
            let mut fv = Vec::with_capacity(nb);
            for (bi, br) in topo.branches.iter().enumerate() {
                let from = &topo.nodes[br.from];
                let to = &topo.nodes[br.to];
                let (mut hi, mut cost, mut class) = (f64::INFINITY, 0.0, CostClass::None);
                if from.kind == NodeKind::Input && da.is_none() {
                    let ci = br.carrier.input_index().expect("inputs carry electricity or gas");
                    cost = self.prices.day_ahead[ci][t];
                    class = CostClass::DayAhead;
                }
                if to.kind == NodeKind::Storage {
                    let st = &self.cfg.storages[to.spec.unwrap()];
                    (hi, cost, class) = (st.max_power, st.charge_cost, CostClass::Storage);
                }
                if from.kind == NodeKind::Storage {
                    let st = &self.cfg.storages[from.spec.unwrap()];
                    (hi, cost, class) = (st.max_power, st.discharge_cost, CostClass::Storage);
                }
                fv.push(self.var(format!("{tag}.t{t}.{}", self.mats.branch_labels[bi]), 0.0, hi, cost, class));
            }

            // Bus conservation; intra-day buses also see day-ahead storage flows.
            for node in topo.nodes_of(NodeKind::Bus).collect::<Vec<_>>() {
                let mut e = Lin::default();
                for br in topo.incoming(node) {
                    e.add(fv[br], 1.0);
                }
                for br in topo.outgoing(node) {
                    e.add(fv[br], -1.0);
                }
                if let Some(d) = da {
                    for s in 0..self.cfg.storages.len() {
                        if topo.branches[self.layout.charge_branch[s]].from == node {
                            self.da_storage(d, t, s, true, &mut e, -1.0);
                            self.da_storage(d, t, s, false, &mut e, 1.0);
                        }
                    }
                }
                self.row(&e, RowSense::Eq, 0.0, &[]);
            }

            for sector in 0..SECTORS {
                let mut e = Lin::default();
                for br in topo.incoming(self.layout.load_node[sector]) {
                    e.add(fv[br], 1.0);
                }
                let r = match loads {
                    Loads::Slots => self.row(&e, RowSense::Eq, 0.0, &[(slot(sector, t), 1.0)]),
                    Loads::Values(v) => self.row(&e, RowSense::Eq, v[slot(sector, t)], &[]),
                };
                self.load_rows.push(LoadRow {
                    stage: if da.is_none() { Stage::DayAhead } else { Stage::IntraDay },
                    eq_row: r,
                    sector,
                    hour: t,
                });
            }

            let mut bt = Vec::with_capacity(self.cfg.converters.len());
            for (c, spec) in self.cfg.converters.iter().enumerate() {
                let node = self.layout.converter_node[c];
                let block = &self.blocks[c];
                let em = block.emit(&mut self.b, &format!("{tag}.t{t}.{}", spec.name));
                self.class.resize(self.b.n_vars(), CostClass::None);
                for &y in &em.selectors {
                    self.ints.push(y.0);
                }
                let mut fuel = Lin::default();
                for br in topo.incoming(node) {
                    fuel.add(fv[br], 1.0);
                }
                for (v, a) in block.input_terms(&em) {
                    fuel.add(v, -a);
                }
                self.row(&fuel, RowSense::Eq, 0.0, &[]);
                for (&carrier, factor) in spec.kind.outputs().iter().zip(spec.port_factors()) {
                    let mut out = Lin::default();
                    for br in topo.outgoing(node).filter(|&br| topo.branches[br].carrier == carrier) {
                        out.add(fv[br], 1.0);
                    }
                    for (v, a) in block.output_terms(&em, factor) {
                        out.add(v, -a);
                    }
                    self.row(&out, RowSense::Eq, 0.0, &[]);
                }
                if let Some(d) = da {
                    let mut dev = Lin::default();
                    for br in topo.incoming(node) {
                        dev.add(fv[br], 1.0);
                    }
                    self.da_converter_input(d, t, c, &mut dev, -1.0);
                    self.row(&dev, RowSense::Le, spec.reserve_up, &[]);
                    self.row(&dev, RowSense::Ge, -spec.reserve_down, &[]);
                }
                bt.push(em);
            }

            let mut st_soc = Vec::with_capacity(self.cfg.storages.len());
            let mut st_mode = Vec::with_capacity(self.cfg.storages.len());
            for (s, spec) in self.cfg.storages.iter().enumerate() {
                let ch = fv[self.layout.charge_branch[s]];
                let dis = fv[self.layout.discharge_branch[s]];
                let (lo, hi) = if t == HOURS - 1 {
                    (spec.initial_soc, spec.initial_soc)
                } else {
                    (0.0, spec.capacity)
                };
                let q = self.var(format!("{tag}.t{t}.{}.soc", spec.name), lo, hi, 0.0, CostClass::None);
                let mut rec = Lin::default();
                rec.add(q, 1.0);
                rec.add(ch, -1.0);
                rec.add(dis, 1.0);
                if t > 0 {
                    rec.add(soc[t - 1][s], -1.0);
                } else {
                    rec.constant -= spec.initial_soc;
                }
                if let Some(d) = da {
                    self.da_storage(d, t, s, true, &mut rec, -1.0);
                    self.da_storage(d, t, s, false, &mut rec, 1.0);
                    for charge in [true, false] {
                        let mut p = Lin::default();
                        p.add(if charge { ch } else { dis }, 1.0);
                        self.da_storage(d, t, s, charge, &mut p, 1.0);
                        self.row(&p, RowSense::Le, spec.max_power, &[]);
                    }
                }
                self.row(&rec, RowSense::Eq, 0.0, &[]);
                let u = if spec.exclusive {
                    let u = self.var(format!("{tag}.t{t}.{}.mode", spec.name), 0.0, 1.0, 0.0, CostClass::None);
                    self.ints.push(u.0);
                    self.b.add_row(&[(ch, 1.0), (u, -spec.max_power)], RowSense::Le, 0.0, &[]);
                    self.b.add_row(&[(dis, 1.0), (u, spec.max_power)], RowSense::Le, spec.max_power, &[]);
                    Some(u)
                } else {
                    None
                };
                st_soc.push(q);
                st_mode.push(u);
            }
            soc.push(st_soc);
            mode.push(st_mode);
            flow.push(fv);
            blocks.push(bt);
        }
        StageVars {
            flow,
            blocks,
            soc,
            mode,
        }
    }

    /// Up/down purchase adjustments of the intra-day stage against `da`.
    fn adjustments(&mut self, id: &StageVars, da: DaRef) -> Vec<Vec<Adjustment>> {
        let topo = &self.mats.topology;
        let mut all = Vec::with_capacity(HOURS);
        for t in 0..HOURS {
            let mut hour = Vec::with_capacity(self.layout.input_nodes.len());
            for (i, &node) in self.layout.input_nodes.iter().enumerate() {
                let ci = topo.nodes[node].carrier.and_then(|c| c.input_index()).unwrap();
                let name = &topo.nodes[node].name;
                let up = self.var(
                    format!("id.t{t}.{name}.up"),
                    0.0,
                    f64::INFINITY,
                    self.prices.intra_day[ci][t],
                    CostClass::IntraDay,
                );
                let down = self.var(
                    format!("id.t{t}.{name}.down"),
                    0.0,
                    f64::INFINITY,
                    -self.prices.refund(ci, t),
                    CostClass::IntraDay,
                );
                let mut e = Lin::default();
                for br in topo.outgoing(node) {
                    e.add(id.flow[t][br], 1.0);
                }
                self.da_purchase(da, t, i, &mut e, -1.0);
                e.add(up, -1.0);
                e.add(down, 1.0);
                self.row(&e, RowSense::Eq, 0.0, &[]);
                hour.push(Adjustment { up, down });
            }
            all.push(hour);
        }
        all
    }
}

struct Prepared {
    mats: HubMatrices,
    layout: Layout,
    prices: PriceSchedule,
    blocks: Vec<PiecewiseBlock>,
}

fn prepare(cfg: &HubConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mats = build_hub_matrices(cfg)?;
    let layout = Layout::new(cfg, &mats)?;
    let prices = cfg.prices.resolve()?;
    let blocks = cfg.converters.iter().map(linearize_converter).collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        mats,
        layout,
        prices,
        blocks,
    })
}

fn assembler<'a>(cfg: &'a HubConfig, p: &'a Prepared) -> Assembler<'a> {
    Assembler {
        cfg,
        mats: &p.mats,
        layout: &p.layout,
        prices: &p.prices,
        blocks: &p.blocks,
        b: LpBuilder::new(LOAD_SLOTS),
        ints: Vec::new(),
        class: Vec::new(),
        load_rows: Vec::new(),
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    stage: Stage,
    a: Assembler,
    p: &Prepared,
    cfg: &HubConfig,
    params: &[f64],
    day_ahead: Option<StageVars>,
    intra_day: Option<StageVars>,
    adjustments: Vec<Vec<Adjustment>>,
    plan: Option<DayAheadPlan>,
) -> Result<DispatchProblem> {
    let lp = a.b.build();
    let milp = MilpProblem::new(lp, a.ints)?;
    let (forecast_slots, actual_slots) = match stage {
        Stage::DayAhead | Stage::Joint => (Some(0..LOAD_SLOTS), None),
        Stage::IntraDay => (None, Some(0..LOAD_SLOTS)),
    };
    Ok(DispatchProblem {
        stage,
        milp,
        params: DVector::from_column_slice(params),
        forecast_slots,
        actual_slots,
        day_ahead,
        intra_day,
        adjustments,
        plan,
        cost_class: a.class,
        load_rows: a.load_rows,
        layout: p.layout.clone(),
        blocks: p.blocks.clone(),
        matrices: p.mats.clone(),
        prices: p.prices.clone(),
        config: cfg.clone(),
    })
}

/// Day-ahead purchase problem; load rows read the forecast parameter slots.
pub fn build_day_ahead(forecasts: &[f64], cfg: &HubConfig) -> Result<DispatchProblem> {
    check_loads(forecasts, "forecast")?;
    let p = prepare(cfg)?;
    let mut a = assembler(cfg, &p);
    let da = a.stage(Loads::Slots, None);
    finish(Stage::DayAhead, a, &p, cfg, forecasts, Some(da), None, Vec::new(), None)
}

/// Intra-day re-dispatch against fixed day-ahead setpoints; load rows read
/// the actual-load parameter slots.
pub fn build_intra_day(plan: &DayAheadPlan, actual: &[f64], cfg: &HubConfig) -> Result<DispatchProblem> {
    check_loads(actual, "actual load")?;
    let p = prepare(cfg)?;
    let dims_ok = plan.converter_input.len() == HOURS
        && plan.converter_input.iter().all(|r| r.len() == cfg.converters.len())
        && plan.purchase.iter().all(|r| r.len() == p.layout.input_nodes.len())
        && plan.charge.iter().chain(&plan.discharge).all(|r| r.len() == cfg.storages.len());
    if !dims_ok {
        return Err(Error::Hub("day-ahead plan does not match the hub layout".into()));
    }
    let mut a = assembler(cfg, &p);
    let id = a.stage(Loads::Slots, Some(DaRef::Plan(plan)));
    let adj = a.adjustments(&id, DaRef::Plan(plan));
    finish(Stage::IntraDay, a, &p, cfg, actual, None, Some(id), adj, Some(plan.clone()))
}

/// Both stages in one problem. Forecasts are the parameters; actual loads
/// are constants.
pub fn build_joint(forecasts: &[f64], actual: &[f64], cfg: &HubConfig) -> Result<DispatchProblem> {
    check_loads(forecasts, "forecast")?;
    check_loads(actual, "actual load")?;
    let p = prepare(cfg)?;
    let mut a = assembler(cfg, &p);
    let da = a.stage(Loads::Slots, None);
    let id = a.stage(Loads::Values(actual), Some(DaRef::Vars(&da)));
    let adj = a.adjustments(&id, DaRef::Vars(&da));
    finish(Stage::Joint, a, &p, cfg, forecasts, Some(da), Some(id), adj, None)
}

impl DispatchProblem {
    pub fn n_binaries(&self) -> usize {
        self.milp.integer_vars.len()
    }

    /// Same problem with different parameter values.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let what = if self.stage == Stage::IntraDay { "actual load" } else { "forecast" };
        check_loads(params, what)?;
        Ok(Self {
            params: DVector::from_column_slice(params),
            ..self.clone()
        })
    }

    pub fn solve(&self) -> Result<MilpResult> {
        branch_and_bound(&self.milp, &self.params)
    }

    pub fn solve_with(&self, opts: &BranchOptions) -> Result<MilpResult> {
        branch_and_bound_with(&self.milp, &self.params, opts, |_, _, _| Ok(()))
    }

    /// Day-ahead setpoints from a solution of a day-ahead or joint problem.
    pub fn day_ahead_plan(&self, z: &DVector<f64>) -> Result<DayAheadPlan> {
        let Some(da) = &self.day_ahead else {
            return Err(Error::Hub("problem has no day-ahead stage".into()));
        };
        let topo = &self.matrices.topology;
        let l = &self.layout;
        let sum = |t: usize, brs: &mut dyn Iterator<Item = usize>| brs.map(|b| z[da.flow[t][b].0]).sum::<f64>();
        let mut plan = DayAheadPlan {
            converter_input: Vec::with_capacity(HOURS),
            purchase: Vec::with_capacity(HOURS),
            charge: Vec::with_capacity(HOURS),
            discharge: Vec::with_capacity(HOURS),
        };
        for t in 0..HOURS {
            plan.converter_input
                .push(l.converter_node.iter().map(|&n| sum(t, &mut topo.incoming(n))).collect());
            plan.purchase.push(l.input_nodes.iter().map(|&n| sum(t, &mut topo.outgoing(n))).collect());
            plan.charge.push(l.charge_branch.iter().map(|&b| z[da.flow[t][b].0]).collect());
            plan.discharge.push(l.discharge_branch.iter().map(|&b| z[da.flow[t][b].0]).collect());
        }
        Ok(plan)
    }
}

/// Objective of `z` split by cost class. Sums to `cᵀz` exactly up to
/// rounding.
pub fn dispatch_cost(problem: &DispatchProblem, z: &DVector<f64>) -> CostBreakdown {
    let c = &problem.milp.base.cost;
    let mut out = CostBreakdown::default();
    for (j, class) in problem.cost_class.iter().enumerate() {
        let v = c[j] * z[j];
        match class {
            CostClass::DayAhead => out.day_ahead += v,
            CostClass::IntraDay => out.intra_day += v,
            CostClass::Storage => out.storage += v,
            CostClass::None => {}
        }
    }
    out.day_ahead += problem.milp.base.cost_offset;
    out
}

/// Outcome of solving day-ahead, fixing it, then solving intra-day.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialOutcome {
    pub day_ahead: MilpResult,
    pub intra_day: MilpResult,
    pub plan: DayAheadPlan,
    /// Day-ahead purchases and storage plus intra-day adjustments and storage actions.
    pub cost: CostBreakdown,
}

pub fn solve_sequential(
    forecasts: &[f64],
    actual: &[f64],
    cfg: &HubConfig,
    opts: &BranchOptions,
    day: usize,
) -> Result<SequentialOutcome> {
    let da_problem = build_day_ahead(forecasts, cfg)?;
    let da = da_problem.solve_with(opts)?;
    if !da.is_optimal() {
        return Err(Error::Infeasible {
            stage: "day-ahead".into(),
            day,
        });
    }
    let plan = da_problem.day_ahead_plan(&da.z_star)?;
    let id_problem = build_intra_day(&plan, actual, cfg)?;
    let id = id_problem.solve_with(opts)?;
    if !id.is_optimal() {
        return Err(Error::Infeasible {
            stage: "intra-day".into(),
            day,
        });
    }
    let cost = dispatch_cost(&da_problem, &da.z_star) + dispatch_cost(&id_problem, &id.z_star);
    Ok(SequentialOutcome {
        day_ahead: da,
        intra_day: id,
        plan,
        cost,
    })
}
