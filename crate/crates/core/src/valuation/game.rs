//! Coalitions, the cost ledger, zero-Shapley values and budget-balanced
//! payouts.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forecast::Forecaster;

/// Largest player count for exact subset enumeration.
pub const MAX_SHAPLEY_SECTORS: usize = 20;

/// Default sector labels.
pub const SECTOR_LABELS: [&str; 3] = ["e", "h", "c"];

/// Set of sectors as a bit mask (bit `n` = sector `n`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coalition(pub u32);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn full(n: usize) -> Self {
        Coalition(((1u64 << n) - 1) as u32)
    }

    pub fn contains(self, sector: usize) -> bool {
        self.0 >> sector & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Parses a label such as `ehc`, `h` or `none`.
    pub fn parse(s: &str, labels: &[&str]) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "none" || s == "∅" {
            return Ok(Self::EMPTY);
        }
        let mut mask = 0u32;
        for ch in s.chars() {
            let Some(n) = labels.iter().position(|l| l.len() == 1 && l.starts_with(ch)) else {
                return Err(Error::Valuation(format!("unknown sector `{ch}` in coalition `{s}`")));
            };
            mask |= 1 << n;
        }
        Ok(Coalition(mask))
    }

    pub fn label(self, labels: &[&str]) -> String {
        if self.is_empty() {
            return "none".into();
        }
        (0..labels.len()).filter(|&n| self.contains(n)).map(|n| labels[n]).collect()
    }

    /// All coalitions of `n` sectors, largest first, by mask within a size.
    pub fn table_order(n: usize) -> Vec<Coalition> {
        let mut all: Vec<Coalition> = (0..1u32 << n).map(Coalition).collect();
        all.sort_by_key(|c| (std::cmp::Reverse(c.len()), c.0));
        all
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label(&SECTOR_LABELS))
    }
}

/// Test-split cost of every coalition and the models that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionLedger {
    pub labels: Vec<String>,
    /// kCNY, indexed by coalition mask.
    pub costs: Vec<Option<f64>>,
    pub snapshots: Vec<Option<Vec<Forecaster>>>,
}

impl CoalitionLedger {
    pub fn new(labels: &[&str]) -> Self {
        let n = 1 << labels.len();
        Self {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            costs: vec![None; n],
            snapshots: vec![None; n],
        }
    }

    /// Ledger over `e, h, c` filled from costs in [`Coalition::table_order`].
    pub fn from_costs(costs_in_table_order: &[f64]) -> Result<Self> {
        let mut ledger = Self::new(&SECTOR_LABELS);
        let order = Coalition::table_order(ledger.n_sectors());
        if costs_in_table_order.len() != order.len() {
            return Err(Error::Valuation(format!(
                "{} costs for {} coalitions",
                costs_in_table_order.len(),
                order.len()
            )));
        }
        for (c, &cost) in order.iter().zip(costs_in_table_order) {
            ledger.record(*c, cost, None)?;
        }
        Ok(ledger)
    }

    pub fn n_sectors(&self) -> usize {
        self.labels.len()
    }

    fn label_refs(&self) -> Vec<&str> {
        self.labels.iter().map(String::as_str).collect()
    }

    pub fn label(&self, c: Coalition) -> String {
        c.label(&self.label_refs())
    }

    pub fn record(&mut self, c: Coalition, cost_kcny: f64, snapshot: Option<Vec<Forecaster>>) -> Result<()> {
        if c.index() >= self.costs.len() {
            return Err(Error::Valuation(format!("coalition mask {} outside the ledger", c.0)));
        }
        if !cost_kcny.is_finite() {
            return Err(Error::Valuation(format!("non-finite cost for {}", self.label(c))));
        }
        self.costs[c.index()] = Some(cost_kcny);
        self.snapshots[c.index()] = snapshot;
        Ok(())
    }

    pub fn cost(&self, c: Coalition) -> Result<f64> {
        self.costs
            .get(c.index())
            .copied()
            .flatten()
            .ok_or_else(|| Error::Valuation(format!("no cost recorded for coalition {}", self.label(c))))
    }

    pub fn is_complete(&self) -> bool {
        self.costs.iter().all(Option::is_some)
    }

    /// Savings over forecast-then-optimize: `V(U) = C_∅ − C_U`.
    pub fn value(&self, c: Coalition) -> Result<f64> {
        Ok(self.cost(Coalition::EMPTY)? - self.cost(c)?)
    }

    /// `V(U)` for every mask.
    pub fn values(&self) -> Result<Vec<f64>> {
        (0..self.costs.len() as u32).map(|m| self.value(Coalition(m))).collect()
    }

    pub fn allocate(&self) -> Result<Allocation> {
        let v = self.values()?;
        let raw = zero_shapley(&v, self.n_sectors())?;
        normalize_allocation(&raw, v[v.len() - 1])
    }

    /// `coalition,cost_kcny,value_kcny`, one row per coalition in table order.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| Error::Valuation(e.to_string()))?;
        let err = |e: csv::Error| Error::Valuation(e.to_string());
        w.write_record(["coalition", "cost_kcny", "value_kcny"]).map_err(err)?;
        for c in Coalition::table_order(self.n_sectors()) {
            w.write_record([self.label(c), format!("{:.6}", self.cost(c)?), format!("{:.6}", self.value(c)?)])
                .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Two-row table: costs and values per coalition.
    pub fn summary_table(&self) -> Result<String> {
        let order = Coalition::table_order(self.n_sectors());
        let mut head = format!("{:<8}", "");
        let mut cost = format!("{:<8}", "C (kCNY)");
        let mut value = format!("{:<8}", "V (kCNY)");
        for c in order {
            head += &format!("{:>12}", self.label(c));
            cost += &format!("{:>12.2}", self.cost(c)?);
            value += &format!("{:>12.2}", self.value(c)?);
        }
        Ok(format!("{head}\n{cost}\n{value}\n"))
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley values with every marginal contribution clipped at zero:
/// `v_n = (1/|N|) Σ_{S ⊆ N∖{n}} C(|N|−1, |S|)⁻¹ [V(S ∪ {n}) − V(S)]⁺`.
/// `values` is indexed by coalition mask and must hold all `2^n` entries.
pub fn zero_shapley(values: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 || n > MAX_SHAPLEY_SECTORS {
        return Err(Error::Valuation(format!(
            "{n} sectors; exact enumeration supports 1 to {MAX_SHAPLEY_SECTORS}"
        )));
    }
    if values.len() != 1 << n {
        return Err(Error::Valuation(format!(
            "{} coalition values for {n} sectors (need {})",
            values.len(),
            1usize << n
        )));
    }
    if values[0] != 0.0 {
        return Err(Error::Valuation(format!("V(∅) = {} is not zero", values[0])));
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Valuation(format!("non-finite value for coalition mask {k}")));
    }
    let weight: Vec<f64> = (0..n).map(|s| 1.0 / (n as f64 * binomial(n - 1, s))).collect();
    let mut out = vec![0.0; n];
    for (p, v) in out.iter_mut().enumerate() {
        let bit = 1usize << p;
        for s in (0..values.len()).filter(|s| s & bit == 0) {
            let gain = values[s | bit] - values[s];
            if gain > 0.0 {
                *v += weight[(s as u32).count_ones() as usize] * gain;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Zero-Shapley values.
    pub raw: Vec<f64>,
    /// Budget-balanced payouts (kCNY).
    pub payouts: Vec<f64>,
}

/// `Γ(v_n) = v_n / Σ v · V(N)`, all zero when `Σ v = 0`.
pub fn normalize_allocation(raw: &[f64], v_n: f64) -> Result<Allocation> {
    if let Some(k) = raw.iter().position(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Valuation(format!(
            "raw value {} of sector {k} is negative or non-finite",
            raw[k]
        )));
    }
    let total: f64 = raw.iter().sum();
    let payouts = if total == 0.0 {
        vec![0.0; raw.len()]
    } else {
        raw.iter().map(|v| v / total * v_n).collect()
    };
    Ok(Allocation {
        raw: raw.to_vec(),
        payouts,
    })
}
