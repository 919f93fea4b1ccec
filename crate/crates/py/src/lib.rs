use std::path::PathBuf;

use chrono::NaiveDate;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use mesval::data::{self, SECTOR_NAMES};
use mesval::diff::GradientRoute;
use mesval::experiment::{self, EvalMode};
use mesval::forecast;
use mesval::hub::{self, build_joint};
use mesval::milp::backward_optimal_subproblem;
use mesval::valuation::{self, Coalition, SECTOR_LABELS};

create_exception!(mesval, MesvalError, PyException);

fn err(e: mesval::Error) -> PyErr {
    MesvalError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<EvalMode> {
    match mode {
        "joint" => Ok(EvalMode::Joint),
        "sequential" => Ok(EvalMode::Sequential),
        other => Err(MesvalError::new_err(format!("unknown mode `{other}`"))),
    }
}

/// Hourly electricity, heat and cooling loads (kW).
#[pyclass(module = "mesval", frozen, skip_from_py_object)]
#[derive(Clone)]
struct LoadSeries {
    inner: data::LoadSeries,
}

#[pymethods]
impl LoadSeries {
    #[staticmethod]
    fn from_csv(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: data::load_series_csv(path).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (seed, days, start = None))]
    fn synthetic(seed: u64, days: usize, start: Option<&str>) -> PyResult<Self> {
        let start = match start {
            Some(s) => s
                .parse::<NaiveDate>()
                .map_err(|e| MesvalError::new_err(format!("start date: {e}")))?,
            None => NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
        };
        Ok(Self {
            inner: data::synth_data_from(seed, days, start),
        })
    }

    fn to_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.to_csv(path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn n_days(&self) -> usize {
        self.inner.n_days()
    }

    fn timestamps(&self) -> Vec<String> {
        self.inner.timestamps.iter().map(|t| t.format("%Y-%m-%dT%H:%M:%S").to_string()).collect()
    }

    /// Loads of one sector by name (`electricity`, `heat`, `cooling`).
    fn loads(&self, sector: &str) -> PyResult<Vec<f64>> {
        let s = SECTOR_NAMES
            .iter()
            .position(|n| *n == sector)
            .ok_or_else(|| MesvalError::new_err(format!("unknown sector `{sector}`")))?;
        Ok(self.inner.loads[s].clone())
    }

    /// The 72 loads of one day in sector-major order.
    fn day(&self, d: usize) -> PyResult<Vec<f64>> {
        self.inner.day(d).map_err(err)
    }
}

#[pyclass(module = "mesval", frozen, skip_from_py_object)]
#[derive(Clone)]
struct HubConfig {
    inner: hub::HubConfig,
}

#[pymethods]
impl HubConfig {
    #[staticmethod]
    fn from_path(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: hub::HubConfig::from_path(path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: hub::HubConfig::from_toml_str(text).map_err(err)?,
        })
    }

    fn converter_names(&self) -> Vec<String> {
        self.inner.converters.iter().map(|c| c.name.clone()).collect()
    }
}

#[pyclass(module = "mesval", frozen, from_py_object)]
#[derive(Clone)]
struct Forecaster {
    inner: forecast::Forecaster,
}

#[pymethods]
impl Forecaster {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: forecast::Forecaster::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn sector(&self) -> &'static str {
        SECTOR_NAMES[self.inner.sector]
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.params.n_params()
    }

    fn forecast_day(&self, series: &LoadSeries, day: usize) -> PyResult<Vec<f64>> {
        self.inner.forecast_day(&series.inner, day).map_err(err)
    }
}

fn unwrap_models(models: &[Forecaster]) -> Vec<forecast::Forecaster> {
    models.iter().map(|m| m.inner.clone()).collect()
}

fn wrap_models(models: Vec<forecast::Forecaster>) -> Vec<Forecaster> {
    models.into_iter().map(|inner| Forecaster { inner }).collect()
}

/// A resolved experiment config.
#[pyclass(module = "mesval", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Experiment {
    inner: experiment::Experiment,
}

#[pymethods]
impl Experiment {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: experiment::Experiment::load(path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str, base_dir: PathBuf) -> PyResult<Self> {
        let cfg = experiment::ExperimentConfig::from_toml_str(text).map_err(err)?;
        Ok(Self {
            inner: experiment::Experiment::from_config(cfg, &base_dir).map_err(err)?,
        })
    }

    #[getter]
    fn series(&self) -> LoadSeries {
        LoadSeries {
            inner: self.inner.series.clone(),
        }
    }

    #[getter]
    fn hub(&self) -> HubConfig {
        HubConfig {
            inner: self.inner.hub.clone(),
        }
    }

    #[getter]
    fn train_days(&self) -> Vec<usize> {
        self.inner.train_days.clone()
    }

    #[getter]
    fn test_days(&self) -> Vec<usize> {
        self.inner.test_days.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.config.seed
    }

    /// Trains the MSE forecaster of every sector.
    fn train_base(&self, py: Python<'_>) -> PyResult<Vec<Forecaster>> {
        let models = py.detach(|| valuation::train_base_for(&self.inner)).map_err(err)?;
        Ok(wrap_models(models))
    }

    /// Test-split cost in kCNY, or over `days` when given.
    #[pyo3(signature = (models, days = None, mode = "joint"))]
    fn evaluate_cost(&self, py: Python<'_>, models: Vec<Forecaster>, days: Option<Vec<usize>>, mode: &str) -> PyResult<f64> {
        let mode = parse_mode(mode)?;
        let days = days.unwrap_or_else(|| self.inner.test_days.clone());
        let models = unwrap_models(&models);
        let e = &self.inner;
        let r = py
            .detach(|| valuation::evaluate_cost(&models, &e.series, &days, &e.hub, mode, &e.branch_options()))
            .map_err(err)?;
        Ok(r.total_kcny())
    }

    /// Cost with forecasts equal to the actual loads (kCNY).
    #[pyo3(signature = (days = None, mode = "joint"))]
    fn evaluate_ideal(&self, py: Python<'_>, days: Option<Vec<usize>>, mode: &str) -> PyResult<f64> {
        let mode = parse_mode(mode)?;
        let days = days.unwrap_or_else(|| self.inner.test_days.clone());
        let e = &self.inner;
        let r = py
            .detach(|| valuation::evaluate_ideal(&e.series, &days, &e.hub, mode, &e.branch_options()))
            .map_err(err)?;
        Ok(r.total_kcny())
    }

    /// End-to-end training of `coalition` (e.g. `"ehc"`). Returns the models
    /// and the training cost per epoch.
    fn train_end_to_end(
        &self,
        py: Python<'_>,
        coalition: &str,
        models: Vec<Forecaster>,
    ) -> PyResult<(Vec<Forecaster>, Vec<f64>)> {
        let c = Coalition::parse(coalition, &SECTOR_LABELS).map_err(err)?;
        let models = unwrap_models(&models);
        let e = &self.inner;
        let run = py
            .detach(|| {
                valuation::train_end_to_end(
                    c,
                    &models,
                    &e.series,
                    &e.train_days,
                    &e.hub,
                    &e.config.training,
                    &e.branch_options(),
                )
            })
            .map_err(err)?;
        Ok((wrap_models(run.models), run.epoch_costs))
    }

    /// Test-split MAPE (%) per sector.
    fn mape(&self, models: Vec<Forecaster>) -> PyResult<Vec<f64>> {
        let m = valuation::sector_metrics(&unwrap_models(&models), &self.inner.series, &self.inner.test_days)
            .map_err(err)?;
        Ok(m.iter().map(|x| x.mape).collect())
    }
}

/// Solves the joint dispatch of one day and returns the cost (CNY), the
/// node count and dC/dM for the 72 forecast slots.
#[pyfunction]
fn solve_day(py: Python<'_>, hub: &HubConfig, forecast: Vec<f64>, actual: Vec<f64>) -> PyResult<(f64, usize, Vec<f64>)> {
    py.detach(|| {
        let p = build_joint(&forecast, &actual, &hub.inner)?;
        let r = p.solve()?;
        if !r.is_optimal() {
            return Err(mesval::Error::Infeasible {
                stage: "joint".into(),
                day: 0,
            });
        }
        let g = backward_optimal_subproblem(&r, &p.params, GradientRoute::Auto)?;
        Ok((r.c_star, r.node_count, g.dcost_dm.as_slice().to_vec()))
    })
    .map_err(err)
}

/// Zero-Shapley values; `values` is indexed by coalition bit mask.
#[pyfunction]
fn zero_shapley(values: Vec<f64>, n_sectors: usize) -> PyResult<Vec<f64>> {
    valuation::zero_shapley(&values, n_sectors).map_err(err)
}

/// Budget-balanced payouts for raw values and the grand-coalition value.
#[pyfunction]
fn normalize_allocation(raw: Vec<f64>, v_n: f64) -> PyResult<Vec<f64>> {
    Ok(valuation::normalize_allocation(&raw, v_n).map_err(err)?.payouts)
}

/// Coalition values and payouts from costs in table order
/// (ehc, eh, ec, hc, e, h, c, none).
#[pyfunction]
fn allocate_costs(costs: Vec<f64>) -> PyResult<(Vec<(String, f64)>, Vec<f64>)> {
    let ledger = valuation::CoalitionLedger::from_costs(&costs).map_err(err)?;
    let values = Coalition::table_order(3)
        .into_iter()
        .map(|c| Ok((c.to_string(), ledger.value(c)?)))
        .collect::<Result<Vec<_>, mesval::Error>>()
        .map_err(err)?;
    let alloc = ledger.allocate().map_err(err)?;
    Ok((values, alloc.payouts))
}

/// Runs the gradient batteries; returns one summary line per battery and
/// whether all passed.
#[pyfunction]
#[pyo3(signature = (seed = 2024))]
fn gradcheck(py: Python<'_>, seed: u64) -> PyResult<(Vec<String>, bool)> {
    let reports = py.detach(|| mesval::gradcheck::run_all(seed)).map_err(err)?;
    let ok = reports.iter().all(|r| r.passed());
    Ok((reports.iter().map(|r| r.summary()).collect(), ok))
}

/// Mean absolute, root-mean-square and mean absolute percentage error.
#[pyfunction]
fn metrics(forecasts: Vec<f64>, actuals: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let m = forecast::metrics(&forecasts, &actuals).map_err(err)?;
    Ok((m.mae, m.rmse, m.mape))
}

#[pymodule]
#[pyo3(name = "mesval")]
fn mesval_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MesvalError", m.py().get_type::<MesvalError>())?;
    m.add("SECTORS", SECTOR_NAMES.to_vec())?;
    m.add_class::<LoadSeries>()?;
    m.add_class::<HubConfig>()?;
    m.add_class::<Forecaster>()?;
    m.add_class::<Experiment>()?;
    m.add_function(wrap_pyfunction!(solve_day, m)?)?;
    m.add_function(wrap_pyfunction!(zero_shapley, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_allocation, m)?)?;
    m.add_function(wrap_pyfunction!(allocate_costs, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    Ok(())
}
