use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForecastMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// Percent.
    pub mape: f64,
}

/// MAE, RMSE and MAPE (percent) over paired values.
pub fn metrics(forecasts: &[f64], actuals: &[f64]) -> Result<ForecastMetrics> {
    if forecasts.len() != actuals.len() {
        return Err(Error::Forecast(format!(
            "{} forecasts for {} actuals",
            forecasts.len(),
            actuals.len()
        )));
    }
    if forecasts.is_empty() {
        return Err(Error::Forecast("no values to score".into()));
    }
    if let Some(k) = actuals.iter().position(|&a| a == 0.0) {
        return Err(Error::ZeroActual(k));
    }
    let n = forecasts.len() as f64;
    let (mut abs, mut sq, mut pct) = (0.0, 0.0, 0.0);
    for (&f, &a) in forecasts.iter().zip(actuals) {
        let e = f - a;
        abs += e.abs();
        sq += e * e;
        pct += (e / a).abs();
    }
    Ok(ForecastMetrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        mape: 100.0 * pct / n,
    })
}
