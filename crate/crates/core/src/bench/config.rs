use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::InitConfig;
use crate::simgen::Dgp;
use crate::train::{RefitSchedule, TrainConfig};

pub const DEFAULT_GRID_K: usize = 128;

/// Network shape and prediction grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden layer widths; empty gives the single-layer model.
    pub hidden: Vec<usize>,
    /// Number of quantile intervals in the time grid.
    pub grid_k: usize,
    pub init: InitConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: Vec::new(),
            grid_k: DEFAULT_GRID_K,
            init: InitConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn widths(&self, covariates: usize) -> Vec<usize> {
        let mut w = vec![covariates + 1];
        w.extend_from_slice(&self.hidden);
        w.push(1);
        w
    }
}

/// `fit` configuration: the benchmark protocol over one or more split seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split_seeds: Vec<u64>,
    /// Z-score the network's time input with training statistics.
    pub standardise_time: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split_seeds: (0..10).collect(),
            standardise_time: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        distinct(&self.split_seeds, "split_seeds")?;
        if self.split_seeds.is_empty() {
            return Err(Error::Config("split_seeds is empty".into()));
        }
        if self.model.grid_k == 0 || self.model.hidden.contains(&0) {
            return Err(Error::Config("grid_k and hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Simulation-study configuration. The spline grid size of every fit is set
/// from `n` and the DGP's smoothness, overriding `model.init.interior_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateStudyConfig {
    pub dgps: Vec<Dgp>,
    pub ns: Vec<usize>,
    pub replicates: usize,
    pub seed0: u64,
    /// Hidden widths per fit; `None` uses the DGP's prescribed architecture.
    pub hidden: Option<Vec<usize>>,
    pub grid_k: usize,
    pub init: InitConfig,
    pub train: TrainConfig,
    /// Prediction grid refinement relative to the 200-point truth grid.
    pub prediction_refine: usize,
    pub out_dir: Option<std::path::PathBuf>,
}

impl Default for RateStudyConfig {
    fn default() -> Self {
        Self {
            dgps: vec![Dgp::One],
            ns: (9..=13).map(|k| 1 << k).collect(),
            replicates: 10,
            seed0: 0,
            hidden: None,
            grid_k: DEFAULT_GRID_K,
            init: InitConfig::default(),
            train: TrainConfig {
                grid_updates: RefitSchedule::AtInit,
                ..TrainConfig::default()
            },
            prediction_refine: 8,
            out_dir: None,
        }
    }
}

impl RateStudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.dgps.is_empty() || self.ns.is_empty() || self.replicates == 0 {
            return Err(Error::Config("dgps, ns and replicates must be nonempty".into()));
        }
        if let Some(n) = self.ns.iter().find(|n| !n.is_power_of_two()) {
            return Err(Error::Config(format!("sample size {n} is not a power of two")));
        }
        if self.ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("ns must be strictly ascending".into()));
        }
        if self.prediction_refine == 0 {
            return Err(Error::Config("prediction_refine must be positive".into()));
        }
        Ok(())
    }
}

fn distinct(seeds: &[u64], what: &str) -> Result<()> {
    let mut s = seeds.to_vec();
    s.sort_unstable();
    if s.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("{what} contains duplicates")));
    }
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
