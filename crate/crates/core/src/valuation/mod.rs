//! Coalition values of sector data and their allocation.

mod game;
mod pipeline;

pub use game::{
    normalize_allocation, zero_shapley, Allocation, Coalition, CoalitionLedger, MAX_SHAPLEY_SECTORS, SECTOR_LABELS,
};
pub use pipeline::{
    day_forecasts, evaluate_cost, evaluate_days, evaluate_ideal, full_valuation, sector_metrics, train_base,
    train_base_for, train_end_to_end, CostReport, DayCost, E2eRun, ValuationOutcome,
};
