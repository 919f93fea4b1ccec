//! Node/branch graph of the hub and its incidence matrices.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::config::{Carrier, HubConfig, NodeKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
    pub carrier: Option<Carrier>,
    /// Index into `converters` or `storages` for those kinds.
    pub spec: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub label: String,
    pub from: usize,
    pub to: usize,
    pub carrier: Carrier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub branches: Vec<Branch>,
}

impl Topology {
    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.branches.iter().enumerate().filter(move |(_, b)| b.from == node).map(|(i, _)| i)
    }

    pub fn incoming(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.branches.iter().enumerate().filter(move |(_, b)| b.to == node).map(|(i, _)| i)
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(move |(_, n)| n.kind == kind).map(|(i, _)| i)
    }

    /// Load node serving a sector.
    pub fn load_node(&self, sector: usize) -> Option<usize> {
        let c = Carrier::from_sector(sector);
        self.nodes_of(NodeKind::Load).find(|&i| self.nodes[i].carrier == Some(c))
    }
}

/// `X·V = V_in`, `Y·V = V_out`, `Z·V = 0` for branch flows `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct HubMatrices {
    /// inputs × branches
    pub x: DMatrix<f64>,
    /// loads × branches
    pub y: DMatrix<f64>,
    /// (buses + converter ports) × branches, rated efficiencies.
    pub z: DMatrix<f64>,
    pub branch_labels: Vec<String>,
    pub input_nodes: Vec<usize>,
    pub load_nodes: Vec<usize>,
    pub z_labels: Vec<String>,
    pub topology: Topology,
}

impl HubMatrices {
    pub fn n_branches(&self) -> usize {
        self.branch_labels.len()
    }
}

fn resolve(cfg: &HubConfig) -> Result<Topology> {
    let err = |m: String| Err(Error::Hub(m));
    let mut index = HashMap::new();
    let mut nodes = Vec::with_capacity(cfg.topology.nodes.len());
    for n in &cfg.topology.nodes {
        if index.insert(n.name.clone(), nodes.len()).is_some() {
            return err(format!("duplicate node `{}`", n.name));
        }
        let (carrier, spec) = match n.kind {
            NodeKind::Converter => match cfg.converter(&n.name) {
                Some((i, c)) => (Some(c.kind.input()), Some(i)),
                None => return err(format!("converter node `{}` has no converter spec", n.name)),
            },
            NodeKind::Storage => match cfg.storage(&n.name) {
                Some((i, s)) => (Some(s.carrier), Some(i)),
                None => return err(format!("storage node `{}` has no storage spec", n.name)),
            },
            _ => match n.carrier {
                Some(c) => (Some(c), None),
                None => return err(format!("node `{}` needs a carrier", n.name)),
            },
        };
        if n.kind == NodeKind::Input && !matches!(carrier, Some(Carrier::Electricity | Carrier::Gas)) {
            return err(format!("input `{}` must carry electricity or gas", n.name));
        }
        if n.kind == NodeKind::Load && carrier.and_then(Carrier::sector).is_none() {
            return err(format!("load `{}` must be electricity, heat or cooling", n.name));
        }
        nodes.push(Node {
            name: n.name.clone(),
            kind: n.kind,
            carrier,
            spec,
        });
    }
    for c in &cfg.converters {
        if !index.contains_key(&c.name) {
            return err(format!("converter `{}` is not placed in the topology", c.name));
        }
    }
    for s in &cfg.storages {
        if !index.contains_key(&s.name) {
            return err(format!("storage `{}` is not placed in the topology", s.name));
        }
    }

    let mut branches = Vec::with_capacity(cfg.topology.branches.len());
    for b in &cfg.topology.branches {
        let Some(&from) = index.get(&b.from) else {
            return err(format!("branch from unknown node `{}`", b.from));
        };
        let Some(&to) = index.get(&b.to) else {
            return err(format!("branch to unknown node `{}`", b.to));
        };
        let (fk, tk) = (nodes[from].kind, nodes[to].kind);
        if matches!(fk, NodeKind::Load | NodeKind::Sink) || tk == NodeKind::Input {
            return err(format!("branch {} → {} runs against the flow direction", b.from, b.to));
        }
        // Carrier leaving `from`, and carrier accepted by `to`.
        let out_c = match fk {
            NodeKind::Converter => None,
            _ => nodes[from].carrier,
        };
        let in_c = nodes[to].carrier;
        let carrier = match (b.carrier, out_c, in_c) {
            (Some(c), _, _) => c,
            (None, Some(c), _) => c,
            (None, None, Some(c)) => c,
            _ => return err(format!("cannot infer the carrier of {} → {}", b.from, b.to)),
        };
        if out_c.is_some_and(|c| c != carrier) || in_c.is_some_and(|c| c != carrier) {
            return err(format!("carrier mismatch on {} → {}", b.from, b.to));
        }
        if fk == NodeKind::Converter {
            let kind = cfg.converters[nodes[from].spec.unwrap()].kind;
            if !kind.outputs().contains(&carrier) {
                return err(format!("converter `{}` has no {carrier:?} output", b.from));
            }
        }
        if (fk == NodeKind::Storage && tk != NodeKind::Bus) || (tk == NodeKind::Storage && fk != NodeKind::Bus) {
            return err(format!("storage branch {} → {} must attach to a bus", b.from, b.to));
        }
        branches.push(Branch {
            label: format!("{}->{}", b.from, b.to),
            from,
            to,
            carrier,
        });
    }
    let topo = Topology { nodes, branches };

    for (i, n) in topo.nodes.iter().enumerate() {
        let ins = topo.incoming(i).count();
        let outs = topo.outgoing(i).count();
        if ins + outs == 0 {
            return err(format!("node `{}` is disconnected", n.name));
        }
        let missing = |port: &str| err(format!("{port} port of `{}` has no branch", n.name));
        match n.kind {
            NodeKind::Input if outs == 0 => return missing("output"),
            NodeKind::Load | NodeKind::Sink if ins == 0 => return missing("input"),
            NodeKind::Bus if ins == 0 || outs == 0 => return missing(if ins == 0 { "input" } else { "output" }),
            NodeKind::Storage if ins != 1 || outs != 1 => {
                return err(format!("storage `{}` needs exactly one charge and one discharge branch", n.name))
            }
            NodeKind::Converter => {
                if ins == 0 {
                    return missing("input");
                }
                let kind = cfg.converters[n.spec.unwrap()].kind;
                for &c in kind.outputs() {
                    if !topo.outgoing(i).any(|b| topo.branches[b].carrier == c) {
                        return missing(&format!("{c:?}"));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(topo)
}

/// Builds `X`, `Y`, `Z` from the configured topology. Converter rows use
/// the efficiency at the largest load fraction on the curve.
pub fn build_hub_matrices(cfg: &HubConfig) -> Result<HubMatrices> {
    let topo = resolve(cfg)?;
    let nb = topo.branches.len();
    let input_nodes: Vec<usize> = topo.nodes_of(NodeKind::Input).collect();
    let load_nodes: Vec<usize> = topo.nodes_of(NodeKind::Load).collect();

    let mut x = DMatrix::zeros(input_nodes.len(), nb);
    for (r, &i) in input_nodes.iter().enumerate() {
        for b in topo.outgoing(i) {
            x[(r, b)] = 1.0;
        }
    }
    let mut y = DMatrix::zeros(load_nodes.len(), nb);
    for (r, &i) in load_nodes.iter().enumerate() {
        for b in topo.incoming(i) {
            y[(r, b)] = 1.0;
        }
    }

    let mut z_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut z_labels = Vec::new();
    for i in topo.nodes_of(NodeKind::Bus) {
        let mut row: Vec<(usize, f64)> = topo.incoming(i).map(|b| (b, 1.0)).collect();
        row.extend(topo.outgoing(i).map(|b| (b, -1.0)));
        z_rows.push(row);
        z_labels.push(format!("bus:{}", topo.nodes[i].name));
    }
    for i in topo.nodes_of(NodeKind::Converter) {
        let spec = &cfg.converters[topo.nodes[i].spec.unwrap()];
        let eta = spec.efficiency_at(spec.max_fraction());
        for (&c, factor) in spec.kind.outputs().iter().zip(spec.port_factors()) {
            let mut row: Vec<(usize, f64)> = topo.incoming(i).map(|b| (b, eta * factor)).collect();
            row.extend(
                topo.outgoing(i)
                    .filter(|&b| topo.branches[b].carrier == c)
                    .map(|b| (b, -1.0)),
            );
            z_rows.push(row);
            z_labels.push(format!("conv:{}:{c:?}", spec.name).to_lowercase());
        }
    }
    let mut z = DMatrix::zeros(z_rows.len(), nb);
    for (r, row) in z_rows.iter().enumerate() {
        for &(b, v) in row {
            z[(r, b)] = v;
        }
    }

    for b in 0..nb {
        let used = x.column(b).amax() > 0.0 || y.column(b).amax() > 0.0 || z.column(b).amax() > 0.0;
        if !used {
            return Err(Error::Hub(format!("branch {} appears in no row", topo.branches[b].label)));
        }
    }

    Ok(HubMatrices {
        x,
        y,
        z,
        branch_labels: topo.branches.iter().map(|b| b.label.clone()).collect(),
        input_nodes,
        load_nodes,
        z_labels,
        topology: topo,
    })
}
