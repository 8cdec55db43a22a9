use log::info;
use serde::{Deserialize, Serialize};

use super::config::FitConfig;
use super::data::LoadedData;
use super::output::config_hash;
use super::split::{split, SplitMode, SplitPlan};
use super::standardise::Standardiser;
use super::fit_model;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, km_censor, MetricReport};
use crate::model::HazardModel;
use crate::stats::{mean, median, std_dev};
use crate::train::{TrainConfig, TrainingLog};

pub struct SplitOutcome {
    pub plan: SplitPlan,
    pub model: HazardModel,
    pub log: TrainingLog,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub splits: usize,
    pub c_td_mean: f64,
    pub c_td_sd: f64,
    pub ibs_mean: f64,
    pub ibs_sd: f64,
    pub ici_mean: f64,
    pub ici_sd: f64,
    /// Splits with D-calibration p-value above 0.05.
    pub dcal_passes: usize,
}

/// Median observed event time among training subjects.
pub fn median_event_time(y: &[f64], events: &[bool]) -> Result<f64> {
    let ev: Vec<f64> = y.iter().zip(events).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
    if ev.is_empty() {
        return Err(Error::Metric("no events in the training split".into()));
    }
    Ok(median(&ev))
}

/// Split, standardise, fit and evaluate one seed of the benchmark protocol.
pub fn run_split(data: &LoadedData, cfg: &FitConfig, seed: u64) -> Result<SplitOutcome> {
    let ds = &data.dataset;
    let plan = split(ds.events(), seed, SplitMode::Benchmark)?;
    let train = ds.subset(&plan.train);
    let val = ds.subset(&plan.val);
    let test = ds.subset(&plan.test);
    let st = Standardiser::fit(train.x());
    let scaling = st.scaling(cfg.standardise_time.then_some(train.y()));
    let widths = cfg.model.widths(ds.d());
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let mut out = fit_model(&train, &val, &widths, cfg.model.grid_k, &cfg.model.init, &train_cfg, scaling, data.time, seed)?;
    out.model.features = data.features.clone();
    let curves = out.model.predict_default(test.x())?;
    let censor = km_censor(train.y(), train.events())?;
    let t_star = median_event_time(train.y(), train.events())?;
    let mut report = evaluate(&curves, test.y(), test.events(), &censor, t_star)?;
    report.seed = Some(seed);
    report.split = cfg.split_seeds.iter().position(|&s| s == seed);
    report.config_hash = Some(config_hash(cfg)?);
    info!(
        "split {seed}: C-TD {:.4} IBS {:.4} ICI {:.4} D-CAL p {:.3}",
        report.c_td, report.ibs, report.ici_median, report.dcal_p
    );
    Ok(SplitOutcome {
        plan,
        model: out.model,
        log: out.log,
        report,
    })
}

pub fn summarise(reports: &[MetricReport]) -> BenchmarkSummary {
    let col = |f: fn(&MetricReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let c = col(|r| r.c_td);
    let b = col(|r| r.ibs);
    let i = col(|r| r.ici_median);
    BenchmarkSummary {
        splits: reports.len(),
        c_td_mean: mean(&c),
        c_td_sd: std_dev(&c),
        ibs_mean: mean(&b),
        ibs_sd: std_dev(&b),
        ici_mean: mean(&i),
        ici_sd: std_dev(&i),
        dcal_passes: reports.iter().filter(|r| r.dcal_p > 0.05).count(),
    }
}
