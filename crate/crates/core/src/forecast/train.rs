//! Features, MSE pre-training, external-gradient updates and persistence.

use std::path::Path;

use chrono::{Datelike, Timelike};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lstm::{backward_raw, forward_day, DayCache, LstmParams, Normalization};
use crate::data::LoadSeries;
use crate::error::{Error, Result};
use crate::hub::HOURS;

/// Load, hour-of-day sin/cos, day-of-week sin/cos.
pub const N_FEATURES: usize = 5;
pub const FILE_FORMAT: &str = "mesval-lstm";
pub const FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub hidden: usize,
    pub window: usize,
    /// MSE learning rate.
    pub lr: f64,
    /// End-to-end learning rate (cost gradients are in CNY/kW).
    pub lr_e2e: f64,
    pub epochs_mse: usize,
    pub epochs_e2e: usize,
    pub optimizer: Optimizer,
    /// Train only the output head during MSE pre-training.
    pub freeze_cell: bool,
    /// Return the end-to-end epoch with the lowest training cost (the MSE
    /// model counts as epoch 0) instead of the last one.
    pub select_best: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            window: 24,
            lr: 1e-3,
            lr_e2e: 1e-3,
            epochs_mse: 50,
            epochs_e2e: 5,
            optimizer: Optimizer::Sgd,
            freeze_cell: false,
            select_best: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr_e2e > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.window < 1 || self.hidden < 1 {
            return Err(Error::Config("window and hidden size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Feature rows for the `window` hours before day `day` of one sector.
pub fn day_window(series: &LoadSeries, sector: usize, day: usize, window: usize, norm: &Normalization) -> Result<DMatrix<f64>> {
    let end = day * HOURS;
    if end < window || end > series.len() {
        return Err(Error::Forecast(format!(
            "day {day} needs {window} hours of history inside the series"
        )));
    }
    let tau = std::f64::consts::TAU;
    let mut m = DMatrix::zeros(window, N_FEATURES);
    for (r, k) in (end - window..end).enumerate() {
        let t = series.timestamps[k];
        let hour = t.hour() as f64 / 24.0;
        let dow = t.weekday().num_days_from_monday() as f64 / 7.0;
        m[(r, 0)] = norm.scale(series.loads[sector][k]);
        m[(r, 1)] = (tau * hour).sin();
        m[(r, 2)] = (tau * hour).cos();
        m[(r, 3)] = (tau * dow).sin();
        m[(r, 4)] = (tau * dow).cos();
    }
    Ok(m)
}

/// First day with a full feature window.
pub fn first_forecastable_day(window: usize) -> usize {
    window.div_ceil(HOURS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub day: usize,
    pub window: DMatrix<f64>,
    /// kW.
    pub target: Vec<f64>,
}

pub fn sector_samples(
    series: &LoadSeries,
    sector: usize,
    days: &[usize],
    window: usize,
    norm: &Normalization,
) -> Result<Vec<Sample>> {
    days.iter()
        .map(|&d| {
            let w = day_window(series, sector, d, window, norm)?;
            let target = series.loads[sector][d * HOURS..(d + 1) * HOURS].to_vec();
            Ok(Sample { day: d, window: w, target })
        })
        .collect()
}

/// Trained model of one sector together with its scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecaster {
    pub sector: usize,
    pub params: LstmParams,
    pub norm: Normalization,
    pub window: usize,
    pub seed: u64,
}

impl Forecaster {
    pub fn new(sector: usize, hidden: usize, window: usize, norm: Normalization, seed: u64) -> Self {
        Self {
            sector,
            params: LstmParams::init(N_FEATURES, hidden, seed),
            norm,
            window,
            seed,
        }
    }

    pub fn forward(&self, window: &DMatrix<f64>) -> Result<DayCache> {
        forward_day(window, &self.params, &self.norm, self.window)
    }

    pub fn forecast_day(&self, series: &LoadSeries, day: usize) -> Result<Vec<f64>> {
        let w = day_window(series, self.sector, day, self.window, &self.norm)?;
        Ok(self.forward(&w)?.forecast)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ForecasterFile {
            format: FILE_FORMAT.into(),
            version: FILE_VERSION,
            sector: self.sector,
            input_dim: self.params.input_dim,
            hidden: self.params.hidden,
            horizon: HOURS,
            window: self.window,
            seed: self.seed,
            normalization: self.norm,
            params: self.params.to_flat(),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::Forecast(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let f: ForecasterFile = serde_json::from_str(&text).map_err(|e| Error::Forecast(e.to_string()))?;
        if f.format != FILE_FORMAT || f.version != FILE_VERSION {
            return Err(Error::Forecast(format!(
                "unsupported model file {} v{}",
                f.format, f.version
            )));
        }
        if f.horizon != HOURS {
            return Err(Error::Forecast(format!("horizon {} is not {HOURS}", f.horizon)));
        }
        let params = LstmParams::from_flat(f.input_dim, f.hidden, &f.params)?;
        if !params.is_finite() {
            return Err(Error::Forecast("model file holds non-finite parameters".into()));
        }
        Ok(Self {
            sector: f.sector,
            params,
            norm: f.normalization,
            window: f.window,
            seed: f.seed,
        })
    }
}

/// On-disk model: a header plus the flat parameter vector in
/// [`LstmParams::to_flat`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterFile {
    pub format: String,
    pub version: u32,
    pub sector: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub horizon: usize,
    pub window: usize,
    pub seed: u64,
    pub normalization: Normalization,
    pub params: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn direction(&mut self, g: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        g.iter()
            .enumerate()
            .map(|(k, &gk)| {
                self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * gk;
                self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * gk * gk;
                (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS)
            })
            .collect()
    }
}

/// Mean squared error of the head output on the normalized scale, before
/// the zero clamp, and its parameter gradient.
pub fn mse_loss_and_grad(model: &Forecaster, samples: &[Sample]) -> Result<(f64, LstmParams)> {
    let p = &model.params;
    let mut grad = LstmParams::zeros(p.input_dim, p.hidden);
    let mut loss = 0.0;
    let n = (samples.len() * HOURS) as f64;
    for s in samples {
        let cache = model.forward(&s.window)?;
        let mut d_raw = DVector::zeros(HOURS);
        for h in 0..HOURS {
            let e = cache.raw[h] - model.norm.scale(s.target[h]);
            loss += e * e / n;
            d_raw[h] = 2.0 * e / n;
        }
        let g = backward_raw(&cache, p, &d_raw)?;
        grad.add_scaled(&g, 1.0);
    }
    Ok((loss, grad))
}

/// Full-batch MSE training for `cfg.epochs_mse` epochs. The trace holds the
/// loss at the start of every epoch followed by the final loss.
pub fn train_mse(model: &Forecaster, samples: &[Sample], cfg: &TrainingConfig) -> Result<(Forecaster, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Forecast("empty training set".into()));
    }
    cfg.validate()?;
    let mut m = model.clone();
    let mut adam = Adam::new(m.params.n_params());
    let mut trace = Vec::with_capacity(cfg.epochs_mse + 1);
    for _ in 0..cfg.epochs_mse {
        let (loss, mut grad) = mse_loss_and_grad(&m, samples)?;
        trace.push(loss);
        if cfg.freeze_cell {
            let head_w = grad.head_w.clone();
            let head_b = grad.head_b.clone();
            grad = LstmParams::zeros(grad.input_dim, grad.hidden);
            grad.head_w = head_w;
            grad.head_b = head_b;
        }
        match cfg.optimizer {
            Optimizer::Sgd => m.params.step(&grad, cfg.lr),
            Optimizer::Adam => {
                let dir = adam.direction(&grad.to_flat());
                let step = LstmParams::from_flat(grad.input_dim, grad.hidden, &dir)?;
                m.params.step(&step, cfg.lr);
            }
        }
        if !m.params.is_finite() {
            return Err(Error::Forecast("training diverged to non-finite parameters".into()));
        }
    }
    trace.push(mse_loss_and_grad(&m, samples)?.0);
    Ok((m, trace))
}

/// One descent step `w ← w − lr·∂(forecastᵀ g)/∂w` for the cost gradient
/// `g = dC/dM` of this sector's 24 slots.
pub fn apply_external_gradient(params: &LstmParams, g_opt: &[f64], cache: &DayCache, lr: f64) -> Result<LstmParams> {
    let grad = super::lstm::backward_day(cache, params, g_opt)?;
    let mut out = params.clone();
    out.step(&grad, lr);
    Ok(out)
}
