//! Per-sector day-ahead load forecasting.

pub mod lstm;
pub mod metrics;
pub mod train;

pub use lstm::{
    backward_day, backward_raw, forward_day, lstm_cell_forward, CellTrace, DayCache, LstmParams, LstmState,
    Normalization, GATES,
};
pub use metrics::{metrics, ForecastMetrics};
pub use train::{
    apply_external_gradient, day_window, first_forecastable_day, mse_loss_and_grad, sector_samples, train_mse,
    Forecaster, ForecasterFile, Optimizer, Sample, TrainingConfig, N_FEATURES,
};
