//! Hub configuration: converters, storages, prices and topology.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOURS: usize = 24;
pub const SECTORS: usize = 3;
pub const SCHEMA_VERSION: u32 = 1;
/// Upper limit on a refrigerator COP accepted by validation.
pub const MAX_COP: f64 = 10.0;
/// Upper limit on any other conversion efficiency.
pub const MAX_EFFICIENCY: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Carrier {
    Electricity,
    Heat,
    Cooling,
    Gas,
}

impl Carrier {
    /// Load sector index (electricity 0, heat 1, cooling 2).
    pub fn sector(self) -> Option<usize> {
        match self {
            Carrier::Electricity => Some(0),
            Carrier::Heat => Some(1),
            Carrier::Cooling => Some(2),
            Carrier::Gas => None,
        }
    }

    pub fn from_sector(s: usize) -> Carrier {
        [Carrier::Electricity, Carrier::Heat, Carrier::Cooling][s]
    }

    /// Index into two-carrier input price tables (electricity 0, gas 1).
    pub fn input_index(self) -> Option<usize> {
        match self {
            Carrier::Electricity => Some(0),
            Carrier::Gas => Some(1),
            _ => None,
        }
    }
}

/// Parameter slot of a forecast/actual load: `sector·24 + hour`.
pub fn slot(sector: usize, hour: usize) -> usize {
    sector * HOURS + hour
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConverterKind {
    Chp,
    GasBoiler,
    ElectricBoiler,
    ElectricRefrigerator,
}

impl ConverterKind {
    pub fn input(self) -> Carrier {
        match self {
            ConverterKind::Chp | ConverterKind::GasBoiler => Carrier::Gas,
            ConverterKind::ElectricBoiler | ConverterKind::ElectricRefrigerator => Carrier::Electricity,
        }
    }

    /// Output ports. The first one carries the rated output.
    pub fn outputs(self) -> &'static [Carrier] {
        match self {
            ConverterKind::Chp => &[Carrier::Heat, Carrier::Electricity],
            ConverterKind::GasBoiler | ConverterKind::ElectricBoiler => &[Carrier::Heat],
            ConverterKind::ElectricRefrigerator => &[Carrier::Cooling],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterSpec {
    pub name: String,
    pub kind: ConverterKind,
    /// Rated output in kW (heat for a CHP).
    pub capacity: f64,
    /// (load fraction, efficiency) breakpoints. Efficiency is rated output
    /// over input.
    pub efficiency_curve: Vec<[f64; 2]>,
    #[serde(default = "one")]
    pub segments: usize,
    /// Heat over electricity for a backpressure CHP.
    #[serde(default)]
    pub chp_heat_to_power_ratio: Option<f64>,
    #[serde(default)]
    pub reserve_up: f64,
    #[serde(default)]
    pub reserve_down: f64,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl ConverterSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("converter `{}`: {msg}", self.name)));
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return bad(format!("capacity {} must be positive", self.capacity));
        }
        if self.efficiency_curve.len() < 2 {
            return bad("efficiency curve needs at least two breakpoints".into());
        }
        let max_eff = if self.kind == ConverterKind::ElectricRefrigerator {
            MAX_COP
        } else {
            MAX_EFFICIENCY
        };
        for w in self.efficiency_curve.windows(2) {
            if w[1][0] <= w[0][0] {
                return bad("load fractions must be strictly increasing".into());
            }
        }
        for &[f, e] in &self.efficiency_curve {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("load fraction {f} outside [0, 1]"));
            }
            if !(e > 0.0 && e <= max_eff) {
                return bad(format!("efficiency {e} outside (0, {max_eff}]"));
            }
        }
        if self.segments < 1 {
            return bad("segments must be at least 1".into());
        }
        if self.reserve_up < 0.0 || self.reserve_down < 0.0 {
            return bad("reserves must be non-negative".into());
        }
        match (self.kind, self.chp_heat_to_power_ratio) {
            (ConverterKind::Chp, Some(r)) if r > 0.0 && r.is_finite() => Ok(()),
            (ConverterKind::Chp, _) => bad("CHP needs a positive chp_heat_to_power_ratio".into()),
            (_, Some(_)) => bad("chp_heat_to_power_ratio only applies to a CHP".into()),
            (_, None) => Ok(()),
        }
    }

    /// Output on each port per unit of rated output.
    pub fn port_factors(&self) -> Vec<f64> {
        match self.kind {
            ConverterKind::Chp => vec![1.0, 1.0 / self.chp_heat_to_power_ratio.unwrap_or(1.0)],
            _ => vec![1.0],
        }
    }

    /// Efficiency at a load fraction, linear between breakpoints and flat
    /// beyond the ends.
    pub fn efficiency_at(&self, frac: f64) -> f64 {
        let c = &self.efficiency_curve;
        if frac <= c[0][0] {
            return c[0][1];
        }
        for w in c.windows(2) {
            if frac <= w[1][0] {
                let t = (frac - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + t * (w[1][1] - w[0][1]);
            }
        }
        c[c.len() - 1][1]
    }

    /// Largest load fraction on the curve.
    pub fn max_fraction(&self) -> f64 {
        self.efficiency_curve[self.efficiency_curve.len() - 1][0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageSpec {
    pub name: String,
    pub carrier: Carrier,
    /// kWh.
    pub capacity: f64,
    /// kW, same limit for charging and discharging.
    pub max_power: f64,
    /// CNY/kWh.
    pub charge_cost: f64,
    pub discharge_cost: f64,
    /// kWh; the day must also end at this level.
    pub initial_soc: f64,
    #[serde(default = "yes")]
    pub exclusive: bool,
}

impl StorageSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("storage `{}`: {msg}", self.name)));
        if self.carrier == Carrier::Gas {
            return bad("gas storage is not modelled");
        }
        if !(self.capacity >= 0.0 && self.max_power >= 0.0) {
            return bad("capacity and power must be non-negative");
        }
        if !(0.0..=self.capacity).contains(&self.initial_soc) {
            return bad("initial SoC outside [0, capacity]");
        }
        if self.charge_cost < 0.0 || self.discharge_cost < 0.0 {
            return bad("costs must be non-negative");
        }
        Ok(())
    }
}

/// One value for the whole day or 24 hourly values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Series {
    Flat(f64),
    Hourly(Vec<f64>),
}

impl Series {
    pub fn resolve(&self, what: &str) -> Result<Vec<f64>> {
        match self {
            Series::Flat(v) => Ok(vec![*v; HOURS]),
            Series::Hourly(v) if v.len() == HOURS => Ok(v.clone()),
            Series::Hourly(v) => Err(Error::Config(format!(
                "{what}: expected {HOURS} hourly values, got {}",
                v.len()
            ))),
        }
    }
}

/// Intra-day prices, given directly or as a multiple of the day-ahead price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntraDaySeries {
    Scaled { factor: f64 },
    Direct(Series),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarrierPrices<S> {
    pub electricity: S,
    pub gas: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceConfig {
    pub day_ahead: CarrierPrices<Series>,
    pub intra_day: CarrierPrices<IntraDaySeries>,
    /// Share of the day-ahead price refunded for energy not taken intra-day.
    pub refund_ratio: f64,
    #[serde(default = "yes")]
    pub require_intra_day_premium: bool,
}

/// Resolved prices in CNY/kWh, indexed `[input carrier][hour]`
/// (electricity 0, gas 1).
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSchedule {
    pub day_ahead: [Vec<f64>; 2],
    pub intra_day: [Vec<f64>; 2],
    pub refund_ratio: f64,
}

impl PriceConfig {
    pub fn resolve(&self) -> Result<PriceSchedule> {
        let da = [
            self.day_ahead.electricity.resolve("day-ahead electricity price")?,
            self.day_ahead.gas.resolve("day-ahead gas price")?,
        ];
        let intra = |s: &IntraDaySeries, base: &[f64], what: &str| -> Result<Vec<f64>> {
            match s {
                IntraDaySeries::Scaled { factor } => Ok(base.iter().map(|p| p * factor).collect()),
                IntraDaySeries::Direct(s) => s.resolve(what),
            }
        };
        let id = [
            intra(&self.intra_day.electricity, &da[0], "intra-day electricity price")?,
            intra(&self.intra_day.gas, &da[1], "intra-day gas price")?,
        ];
        let sched = PriceSchedule {
            day_ahead: da,
            intra_day: id,
            refund_ratio: self.refund_ratio,
        };
        sched.validate(self.require_intra_day_premium)?;
        Ok(sched)
    }
}

impl PriceSchedule {
    pub fn validate(&self, require_premium: bool) -> Result<()> {
        for table in self.day_ahead.iter().chain(self.intra_day.iter()) {
            if table.len() != HOURS || table.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                return Err(Error::Config("prices must be 24 finite non-negative values".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.refund_ratio) {
            return Err(Error::Config("refund_ratio must lie in [0, 1]".into()));
        }
        // Buying up and refunding down in the same hour must never pay.
        for c in 0..2 {
            for t in 0..HOURS {
                if self.intra_day[c][t] < self.refund(c, t) {
                    return Err(Error::Config(format!(
                        "intra-day price below the refund price at hour {t}"
                    )));
                }
            }
        }
        if require_premium {
            for t in 0..HOURS {
                if self.intra_day[0][t] < self.day_ahead[0][t] {
                    return Err(Error::Config(format!(
                        "intra-day grid price below day-ahead price at hour {t}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn refund(&self, input: usize, hour: usize) -> f64 {
        self.refund_ratio * self.day_ahead[input][hour]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Input,
    Bus,
    Converter,
    Load,
    Storage,
    /// Free disposal of surplus energy.
    Sink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub name: String,
    pub kind: NodeKind,
    /// Required for inputs, buses, loads and sinks.
    #[serde(default)]
    pub carrier: Option<Carrier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub carrier: Option<Carrier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub nodes: Vec<NodeConfig>,
    pub branches: Vec<BranchConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub converters: Vec<ConverterSpec>,
    #[serde(default)]
    pub storages: Vec<StorageSpec>,
    pub prices: PriceConfig,
    pub topology: TopologyConfig,
}

impl HubConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: HubConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for c in &self.converters {
            c.validate()?;
        }
        for s in &self.storages {
            s.validate()?;
        }
        self.prices.resolve()?;
        Ok(())
    }

    pub fn converter(&self, name: &str) -> Option<(usize, &ConverterSpec)> {
        self.converters.iter().enumerate().find(|(_, c)| c.name == name)
    }

    pub fn storage(&self, name: &str) -> Option<(usize, &StorageSpec)> {
        self.storages.iter().enumerate().find(|(_, s)| s.name == name)
    }
}
