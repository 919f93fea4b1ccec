//! Hourly multi-sector load series: CSV ingestion and synthetic generation.

use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hub::{slot, HOURS, LOAD_SLOTS, SECTORS};

pub const SECTOR_NAMES: [&str; SECTORS] = ["electricity", "heat", "cooling"];
pub const CSV_HEADER: [&str; 4] = ["timestamp", "electricity_kw", "heat_kw", "cooling_kw"];

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    File(String),
    Synthetic { seed: u64 },
}

/// Gap-free hourly loads in kW, starting at midnight.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSeries {
    pub timestamps: Vec<NaiveDateTime>,
    /// `loads[sector][hour]`.
    pub loads: [Vec<f64>; SECTORS],
    pub provenance: Provenance,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(t) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

impl LoadSeries {
    pub fn new(timestamps: Vec<NaiveDateTime>, loads: [Vec<f64>; SECTORS], provenance: Provenance) -> Result<Self> {
        let s = Self {
            timestamps,
            loads,
            provenance,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.timestamps.len();
        if self.loads.iter().any(|l| l.len() != n) {
            return Err(Error::Data("sector series differ in length".into()));
        }
        for (k, w) in self.timestamps.windows(2).enumerate() {
            let step = w[1] - w[0];
            if step <= chrono::Duration::zero() {
                return Err(Error::Data(format!("timestamps not increasing at row {}", k + 2)));
            }
            if step != chrono::Duration::hours(1) {
                return Err(Error::Data(format!(
                    "gap after {}: missing {}",
                    w[0],
                    w[0] + chrono::Duration::hours(1)
                )));
            }
        }
        for (s, l) in self.loads.iter().enumerate() {
            if let Some(k) = l.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Data(format!("{} load {} at row {}", SECTOR_NAMES[s], l[k], k + 1)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Whole days covered, counted from the first timestamp.
    pub fn n_days(&self) -> usize {
        self.len() / HOURS
    }

    fn check_day_aligned(&self) -> Result<()> {
        match self.timestamps.first() {
            Some(t) if t.hour() != 0 || t.minute() != 0 => {
                Err(Error::Data(format!("series must start at midnight, starts at {t}")))
            }
            _ => Ok(()),
        }
    }

    /// Loads of day `d` in hub slot order (`sector·24 + hour`).
    pub fn day(&self, d: usize) -> Result<Vec<f64>> {
        self.check_day_aligned()?;
        if d >= self.n_days() {
            return Err(Error::Data(format!("day {d} outside the {} days of the series", self.n_days())));
        }
        let mut out = vec![0.0; LOAD_SLOTS];
        for s in 0..SECTORS {
            for h in 0..HOURS {
                out[slot(s, h)] = self.loads[s][d * HOURS + h];
            }
        }
        Ok(out)
    }

    pub fn date(&self, d: usize) -> Option<NaiveDate> {
        self.timestamps.get(d * HOURS).map(|t| t.date())
    }

    /// Index of the first day whose date is `date`.
    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        (0..self.n_days()).find(|&d| self.date(d) == Some(date))
    }

    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| Error::Data(e.to_string()))?;
        let err = |e: csv::Error| Error::Data(e.to_string());
        w.write_record(CSV_HEADER).map_err(err)?;
        for (k, t) in self.timestamps.iter().enumerate() {
            w.write_record([
                t.format("%Y-%m-%dT%H:%M:%S").to_string(),
                format!("{:.6}", self.loads[0][k]),
                format!("{:.6}", self.loads[1][k]),
                format!("{:.6}", self.loads[2][k]),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads `timestamp,electricity_kw,heat_kw,cooling_kw`. Gaps are rejected.
pub fn load_series_csv(path: impl AsRef<Path>) -> Result<LoadSeries> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
    let mut col = [0usize; 4];
    for (k, name) in CSV_HEADER.iter().enumerate() {
        col[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| Error::Data(format!("{}: missing column `{name}`", path.display())))?;
    }
    let mut timestamps = Vec::new();
    let mut loads: [Vec<f64>; SECTORS] = Default::default();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        let field = |c: usize| rec.get(col[c]).unwrap_or("");
        let t = parse_timestamp(field(0))
            .ok_or_else(|| Error::Data(format!("line {line}: bad timestamp `{}`", field(0))))?;
        if let Some(&prev) = timestamps.last() {
            if t <= prev {
                return Err(Error::Data(format!("line {line}: timestamp {t} does not increase")));
            }
            if t - prev != chrono::Duration::hours(1) {
                return Err(Error::Data(format!(
                    "line {line}: gap, missing {}",
                    prev + chrono::Duration::hours(1)
                )));
            }
        }
        timestamps.push(t);
        for s in 0..SECTORS {
            let v: f64 = field(s + 1)
                .parse()
                .map_err(|_| Error::Data(format!("line {line}: bad {} value `{}`", CSV_HEADER[s + 1], field(s + 1))))?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Data(format!("line {line}: negative or non-finite {} {v}", CSV_HEADER[s + 1])));
            }
            loads[s].push(v);
        }
    }
    LoadSeries::new(timestamps, loads, Provenance::File(path.display().to_string()))
}

/// Envelope of one sector: base level, seasonal swing, daily shape and
/// weekend factor.
struct SectorShape {
    base: f64,
    seasonal: f64,
    /// Day of year of the seasonal peak.
    peak_day: f64,
    daily: f64,
    /// Hour of the daily peak.
    peak_hour: f64,
    weekend: f64,
    noise: f64,
}

// Magnitudes sized for the default hub in configs/hub.toml.
const SHAPES: [SectorShape; SECTORS] = [
    SectorShape {
        base: 2300.0,
        seasonal: 250.0,
        peak_day: 200.0,
        daily: 500.0,
        peak_hour: 14.0,
        weekend: 0.85,
        noise: 0.04,
    },
    SectorShape {
        base: 1300.0,
        seasonal: 450.0,
        peak_day: 15.0,
        daily: 250.0,
        peak_hour: 6.0,
        weekend: 0.95,
        noise: 0.05,
    },
    SectorShape {
        base: 3400.0,
        seasonal: 1200.0,
        peak_day: 200.0,
        daily: 1000.0,
        peak_hour: 15.0,
        weekend: 0.9,
        noise: 0.05,
    },
];

/// Deterministic synthetic loads starting 2024-01-01 00:00: seasonal and
/// daily cosines, a weekend dip, and AR(1) noise bounded to ±3σ.
pub fn synth_data(seed: u64, days: usize) -> LoadSeries {
    synth_data_from(seed, days, NaiveDate::from_ymd_opt(2024, 1, 1).unwrap())
}

pub fn synth_data_from(seed: u64, days: usize, start: NaiveDate) -> LoadSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = start.and_hms_opt(0, 0, 0).unwrap();
    let n = days * HOURS;
    let timestamps: Vec<NaiveDateTime> = (0..n).map(|k| t0 + chrono::Duration::hours(k as i64)).collect();
    let mut loads: [Vec<f64>; SECTORS] = Default::default();
    let tau = std::f64::consts::TAU;
    for (s, shape) in SHAPES.iter().enumerate() {
        let mut ar = 0.0;
        loads[s] = timestamps
            .iter()
            .map(|t| {
                let doy = t.ordinal0() as f64;
                let hour = t.hour() as f64;
                let season = (tau * (doy - shape.peak_day) / 365.0).cos();
                let daily = (tau * (hour - shape.peak_hour) / 24.0).cos();
                let weekend = if t.weekday().number_from_monday() >= 6 { shape.weekend } else { 1.0 };
                let level = (shape.base + shape.seasonal * season + shape.daily * daily) * weekend;
                let shock: f64 = rng.gen::<f64>() * 2.0 - 1.0;
                ar = (0.7 * ar + shock * 0.6f64.sqrt()).clamp(-3.0, 3.0);
                (level * (1.0 + shape.noise * ar)).max(1.0)
            })
            .collect();
    }
    LoadSeries {
        timestamps,
        loads,
        provenance: Provenance::Synthetic { seed },
    }
}
