//! Physical invariants of a dispatch solution.

use nalgebra::DVector;

use super::config::{NodeKind, HOURS};
use super::dispatch::{DispatchProblem, StageVars};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantTolerances {
    /// kW, node balances and converter curves.
    pub conservation: f64,
    /// kW beyond `max(RU, RD)`.
    pub reserve: f64,
    /// kWh outside `[0, capacity]` and in the SoC recursion.
    pub storage: f64,
    /// kW of simultaneous charge and discharge.
    pub exclusivity: f64,
}

impl Default for InvariantTolerances {
    fn default() -> Self {
        Self {
            conservation: 1e-7,
            reserve: 1e-9,
            storage: 1e-7,
            exclusivity: 1e-7,
        }
    }
}

/// Largest violation of each invariant; all zero for an exact dispatch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvariantReport {
    pub conservation: f64,
    pub reserve: f64,
    pub soc_bounds: f64,
    pub recursion: f64,
    pub exclusivity: f64,
    pub violations: Vec<String>,
}

impl InvariantReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Day-ahead values as seen by the intra-day checks.
struct DaView {
    conv_in: Vec<Vec<f64>>,
    charge: Vec<Vec<f64>>,
    discharge: Vec<Vec<f64>>,
}

fn note(slot: &mut f64, v: f64) {
    if v > *slot {
        *slot = v;
    }
}

pub fn check_dispatch(problem: &DispatchProblem, z: &DVector<f64>, tol: &InvariantTolerances) -> InvariantReport {
    let mut rep = InvariantReport::default();
    let cfg = &problem.config;
    let topo = &problem.matrices.topology;
    let l = &problem.layout;
    let val = |v: crate::lp::VarId| z[v.0];

    // Load rows against their right-hand side.
    let lp = &problem.milp.base;
    let (_, bh) = lp.rhs(&problem.params);
    for r in &problem.load_rows {
        let lhs = lp.a_eq.row(r.eq_row).transpose().dot(z);
        note(&mut rep.conservation, (lhs - bh[r.eq_row]).abs());
    }

    let da_view = match (&problem.day_ahead, &problem.plan) {
        (Some(da), _) => Some(problem.day_ahead_plan(z).map(|p| (p, da)).ok().map(|(p, _)| DaView {
            conv_in: p.converter_input,
            charge: p.charge,
            discharge: p.discharge,
        })),
        (None, Some(p)) => Some(Some(DaView {
            conv_in: p.converter_input.clone(),
            charge: p.charge.clone(),
            discharge: p.discharge.clone(),
        })),
        _ => None,
    }
    .flatten();

    let mut stages: Vec<(&StageVars, bool)> = Vec::new();
    if let Some(da) = &problem.day_ahead {
        stages.push((da, false));
    }
    if let Some(id) = &problem.intra_day {
        stages.push((id, true));
    }

    for (sv, is_id) in stages {
        let da = if is_id { da_view.as_ref() } else { None };
        for t in 0..HOURS {
            let f = |b: usize| val(sv.flow[t][b]);
            for node in topo.nodes_of(NodeKind::Bus) {
                let mut res: f64 = topo.incoming(node).map(f).sum::<f64>() - topo.outgoing(node).map(f).sum::<f64>();
                if let Some(d) = da {
                    for s in 0..cfg.storages.len() {
                        if topo.branches[l.charge_branch[s]].from == node {
                            res += d.discharge[t][s] - d.charge[t][s];
                        }
                    }
                }
                note(&mut rep.conservation, res.abs());
            }
            for (c, spec) in cfg.converters.iter().enumerate() {
                let node = l.converter_node[c];
                let block = &problem.blocks[c];
                let em = &sv.blocks[t][c];
                let input: f64 = topo.incoming(node).map(f).sum();
                let fuel: f64 = block.input_terms(em).iter().map(|&(v, a)| a * val(v)).sum();
                note(&mut rep.conservation, (input - fuel).abs());
                for (&carrier, factor) in spec.kind.outputs().iter().zip(spec.port_factors()) {
                    let out: f64 = topo
                        .outgoing(node)
                        .filter(|&b| topo.branches[b].carrier == carrier)
                        .map(f)
                        .sum();
                    let rated: f64 = block.output_terms(em, factor).iter().map(|&(v, a)| a * val(v)).sum();
                    note(&mut rep.conservation, (out - rated).abs());
                }
                if let Some(d) = da {
                    let band = spec.reserve_up.max(spec.reserve_down);
                    note(&mut rep.reserve, ((input - d.conv_in[t][c]).abs() - band).max(0.0));
                }
            }
            for (s, spec) in cfg.storages.iter().enumerate() {
                let ch = f(l.charge_branch[s]);
                let dis = f(l.discharge_branch[s]);
                if spec.exclusive {
                    note(&mut rep.exclusivity, ch.min(dis).max(0.0));
                }
                let q = val(sv.soc[t][s]);
                note(&mut rep.soc_bounds, (-q).max(q - spec.capacity).max(0.0));
                let prev = if t == 0 { spec.initial_soc } else { val(sv.soc[t - 1][s]) };
                let mut net = ch - dis;
                if let Some(d) = da {
                    net += d.charge[t][s] - d.discharge[t][s];
                }
                note(&mut rep.recursion, (q - prev - net).abs());
                if t == HOURS - 1 {
                    note(&mut rep.recursion, (q - spec.initial_soc).abs());
                }
            }
        }
    }

    let checks = [
        ("energy conservation", rep.conservation, tol.conservation),
        ("reserve containment", rep.reserve, tol.reserve),
        ("SoC bounds", rep.soc_bounds, tol.storage),
        ("SoC recursion", rep.recursion, tol.storage),
        ("charge/discharge exclusion", rep.exclusivity, tol.exclusivity),
    ];
    for (what, v, t) in checks {
        if v > t {
            rep.violations.push(format!("{what}: {v:.3e} exceeds {t:.1e}"));
        }
    }
    rep
}
