//! Orchestration: configuration, CSV ingestion, split and standardisation
//! protocol, the simulation rate study and the benchmark pipeline.

pub mod config;
pub mod data;
pub mod output;
pub mod pipeline;
pub mod rate;
pub mod split;
pub mod standardise;

pub use config::{read_json, FitConfig, ModelConfig, RateStudyConfig};
pub use data::{load_csv, LoadedData};
pub use output::{config_hash, sha256_hex, OutputDir};
pub use pipeline::{run_split, BenchmarkSummary, SplitOutcome};
pub use rate::{fit_replicate, run_rate_study, RateStudy, WORKERS_ENV};
pub use split::{split, SplitMode, SplitPlan};
pub use standardise::Standardiser;

use crate::error::Result;
use crate::kan::{InitConfig, KanNetwork};
use crate::model::{HazardModel, InputScaling, TimeNormalisation};
use crate::survival::{SurvivalDataset, TimeGrid};
use crate::train::{fit, FitOutput, TrainConfig};

/// Builds a fresh network on a `grid_k` quantile grid of the training times
/// and trains it.
#[allow(clippy::too_many_arguments)]
pub fn fit_model(
    train: &SurvivalDataset,
    val: &SurvivalDataset,
    widths: &[usize],
    grid_k: usize,
    init: &InitConfig,
    train_cfg: &TrainConfig,
    scaling: InputScaling,
    time: TimeNormalisation,
    net_seed: u64,
) -> Result<FitOutput> {
    let (grid, _) = TimeGrid::from_quantiles(train.y(), grid_k)?;
    let net = KanNetwork::init(widths, init, net_seed)?;
    let model = HazardModel::new(net, scaling, time, grid.clone())?.with_training_times(train.y());
    fit(model, train, val, &grid, train_cfg)
}
