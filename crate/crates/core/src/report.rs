//! CSV artifacts and plain-text tables. Monetary values are kCNY unless a
//! column says otherwise.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::SECTOR_NAMES;
use crate::error::{Error, Result};
use crate::forecast::ForecastMetrics;
use crate::valuation::{Allocation, CoalitionLedger, CostReport};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn row<I, S>(w: &mut csv::Writer<std::fs::File>, fields: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|e| Error::Data(e.to_string()))
}

/// `day,date,day_ahead_cny,intra_day_cny,storage_cny,total_cny,nodes`
pub fn write_daily_costs(report: &CostReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    row(&mut w, ["day", "date", "day_ahead_cny", "intra_day_cny", "storage_cny", "total_cny", "nodes"])?;
    for d in &report.days {
        row(
            &mut w,
            [
                d.day.to_string(),
                d.date.to_string(),
                format!("{:.6}", d.cost.day_ahead),
                format!("{:.6}", d.cost.intra_day),
                format!("{:.6}", d.cost.storage),
                format!("{:.6}", d.cost.total()),
                d.nodes.to_string(),
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

/// `month,cost_kcny` with a closing `total` row.
pub fn write_monthly_costs(report: &CostReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    row(&mut w, ["month", "cost_kcny"])?;
    for (month, cost) in report.monthly_kcny() {
        row(&mut w, [month, format!("{cost:.6}")])?;
    }
    row(&mut w, ["total".to_string(), format!("{:.6}", report.total_kcny())])?;
    w.flush()?;
    Ok(())
}

pub fn monthly_table(title: &str, report: &CostReport) -> String {
    let mut s = format!("{title}\n{:<10}{:>14}\n", "month", "cost (kCNY)");
    for (month, cost) in report.monthly_kcny() {
        let _ = writeln!(s, "{month:<10}{cost:>14.4}");
    }
    let _ = writeln!(s, "{:<10}{:>14.4}", "total", report.total_kcny());
    s
}

/// `model,sector,mae_kw,rmse_kw,mape_pct`
pub fn write_metrics(rows: &[(String, Vec<ForecastMetrics>)], path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    row(&mut w, ["model", "sector", "mae_kw", "rmse_kw", "mape_pct"])?;
    for (model, per_sector) in rows {
        for (s, m) in per_sector.iter().enumerate() {
            row(
                &mut w,
                [
                    model.clone(),
                    SECTOR_NAMES[s].to_string(),
                    format!("{:.6}", m.mae),
                    format!("{:.6}", m.rmse),
                    format!("{:.6}", m.mape),
                ],
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn metrics_table(rows: &[(String, Vec<ForecastMetrics>)]) -> String {
    let mut s = format!("{:<12}{:<13}{:>10}{:>10}{:>9}\n", "model", "sector", "MAE", "RMSE", "MAPE%");
    for (model, per_sector) in rows {
        for (k, m) in per_sector.iter().enumerate() {
            let _ = writeln!(
                s,
                "{model:<12}{:<13}{:>10.3}{:>10.3}{:>9.3}",
                SECTOR_NAMES[k], m.mae, m.rmse, m.mape
            );
        }
    }
    s
}

/// `sector,zero_shapley,payout_kcny`
pub fn write_allocation(ledger: &CoalitionLedger, alloc: &Allocation, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    row(&mut w, ["sector", "zero_shapley", "payout_kcny"])?;
    for (n, label) in ledger.labels.iter().enumerate() {
        row(&mut w, [label.clone(), format!("{:.6}", alloc.raw[n]), format!("{:.6}", alloc.payouts[n])])?;
    }
    w.flush()?;
    Ok(())
}

pub fn allocation_table(ledger: &CoalitionLedger, alloc: &Allocation) -> String {
    let mut s = format!("{:<8}{:>14}{:>14}\n", "sector", "zero-Shapley", "payout");
    for (n, label) in ledger.labels.iter().enumerate() {
        let _ = writeln!(s, "{label:<8}{:>14.4}{:>14.4}", alloc.raw[n], alloc.payouts[n]);
    }
    let _ = writeln!(s, "{:<8}{:>14}{:>14.4}", "sum", "", alloc.payouts.iter().sum::<f64>());
    s
}
