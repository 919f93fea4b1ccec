//! Experiment description: hub, dataset, train/test split, training and
//! solver settings, and seed fan-out.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{load_series_csv, synth_data_from, LoadSeries};
use crate::error::{Error, Result};
use crate::forecast::{first_forecastable_day, TrainingConfig};
use crate::hub::{HubConfig, SECTORS};
use crate::milp::BranchOptions;

/// Sub-seed streams derived from the experiment seed.
pub const DATA_STREAM: u64 = 0;
pub const MODEL_STREAM: u64 = 1;

/// Deterministic sub-seed `stream` of `seed`.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Both stages in one problem.
    #[default]
    Joint,
    /// Day-ahead solved and fixed, then intra-day.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub days: usize,
    pub start: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    /// CSV file, relative to the config file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SynthSpec>,
}

/// Train on `[train_start, test_start)`, test on `[test_start, test_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_start: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub max_nodes: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            max_nodes: BranchOptions::default().max_nodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Hub config, relative to the experiment config file.
    pub hub: PathBuf,
    /// Converter name → number of curve segments, replacing the hub file's value.
    #[serde(default)]
    pub segments: BTreeMap<String, usize>,
    #[serde(default)]
    pub mode: EvalMode,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub data: DataSpec,
    pub split: SplitSpec,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub solver: SolverSpec,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }
}

/// A resolved experiment: hub with overrides applied, the dataset and the
/// day indices of both splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub hub: HubConfig,
    pub series: LoadSeries,
    pub train_days: Vec<usize>,
    pub test_days: Vec<usize>,
    pub output_dir: PathBuf,
}

impl Experiment {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let config = ExperimentConfig::from_toml_str(&text)?;
        Self::from_config(config, path.parent().unwrap_or(Path::new(".")))
    }

    /// Relative paths in `config` are resolved against `base_dir`.
    pub fn from_config(config: ExperimentConfig, base_dir: &Path) -> Result<Self> {
        config.training.validate()?;
        let mut hub = HubConfig::from_path(base_dir.join(&config.hub))
            .map_err(|e| Error::Config(format!("hub {}: {e}", config.hub.display())))?;
        for (name, &segments) in &config.segments {
            let Some(conv) = hub.converters.iter_mut().find(|c| &c.name == name) else {
                return Err(Error::Config(format!("segment override for unknown converter `{name}`")));
            };
            conv.segments = segments;
        }
        hub.validate()?;

        let series = match (&config.data.path, &config.data.synthetic) {
            (Some(p), None) => load_series_csv(base_dir.join(p))?,
            (None, Some(s)) => {
                if s.days == 0 {
                    return Err(Error::Config("synthetic data needs at least one day".into()));
                }
                synth_data_from(sub_seed(config.seed, DATA_STREAM), s.days, s.start)
            }
            _ => return Err(Error::Config("data needs exactly one of `path` or `synthetic`".into())),
        };

        let sp = config.split;
        if !(sp.train_start < sp.test_start && sp.test_start < sp.test_end) {
            return Err(Error::Config("split dates must satisfy train_start < test_start < test_end".into()));
        }
        let locate = |d: NaiveDate, what: &str| {
            series
                .day_index(d)
                .ok_or_else(|| Error::Config(format!("{what} {d} is outside the dataset")))
        };
        let train_start = locate(sp.train_start, "train_start")?;
        let test_start = locate(sp.test_start, "test_start")?;
        let test_end = match series.day_index(sp.test_end) {
            Some(d) => d,
            None if series.date(series.n_days() - 1).map(|l| l.succ_opt()) == Some(Some(sp.test_end)) => {
                series.n_days()
            }
            None => return Err(Error::Config(format!("test_end {} is outside the dataset", sp.test_end))),
        };
        let first = first_forecastable_day(config.training.window);
        if train_start < first {
            return Err(Error::Config(format!(
                "train_start {} leaves no {}-hour feature window",
                sp.train_start, config.training.window
            )));
        }
        let output_dir = base_dir.join(&config.output_dir);
        Ok(Self {
            train_days: (train_start..test_start).collect(),
            test_days: (test_start..test_end).collect(),
            config,
            hub,
            series,
            output_dir,
        })
    }

    /// Same experiment with another seed. Synthetic data is regenerated.
    pub fn with_seed(&self, seed: u64, base_dir: &Path) -> Result<Self> {
        let mut config = self.config.clone();
        config.seed = seed;
        Self::from_config(config, base_dir)
    }

    pub fn branch_options(&self) -> BranchOptions {
        BranchOptions {
            max_nodes: self.config.solver.max_nodes,
            ..Default::default()
        }
    }

    /// Initialization seed of one sector's forecaster.
    pub fn model_seed(&self, sector: usize) -> u64 {
        debug_assert!(sector < SECTORS);
        sub_seed(sub_seed(self.config.seed, MODEL_STREAM), sector as u64)
    }
}
