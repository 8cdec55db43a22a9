use std::io::Write;

use log::{info, warn};
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RateStudyConfig;
use super::split::{split, SplitMode};
use super::fit_model;
use crate::error::Result;
use crate::kan::InitConfig;
use crate::metrics::{ise_survival, slope_fit};
use crate::model::{InputScaling, TimeNormalisation};
use crate::simgen::{adaptive_grid_size, Dgp, Scenario, ADMIN_HORIZON, COVARIATES, TRUTH_POINTS};
use crate::stats::{quantile_sorted, sorted_copy};
use crate::survival::TimeGrid;
use crate::train::TrainConfig;

/// Environment variable bounding the worker pool of the rate study.
pub const WORKERS_ENV: &str = "KAPLAN_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub dgp: Dgp,
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub interior_count: usize,
    pub ise: f64,
    pub epochs: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFailure {
    pub dgp: Dgp,
    pub n: usize,
    pub replicate: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub dgp: Dgp,
    pub n: usize,
    pub count: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub dgp: Dgp,
    /// Slope over every sample size.
    pub slope_all: Option<f64>,
    /// Slope over the largest half of the sample sizes (at least three).
    pub slope_upper: Option<f64>,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub rows: Vec<RateRow>,
    pub failures: Vec<RateFailure>,
    pub cells: Vec<CellSummary>,
    pub slopes: Vec<SlopeSummary>,
}

impl RateStudy {
    pub fn median(&self, dgp: Dgp, n: usize) -> Option<f64> {
        self.cells.iter().find(|c| c.dgp == dgp && c.n == n).map(|c| c.median)
    }

    pub fn slope(&self, dgp: Dgp) -> Option<&SlopeSummary> {
        self.slopes.iter().find(|s| s.dgp == dgp)
    }

    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_cells_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn replicate_seed(seed0: u64, dgp: Dgp, n: usize, replicate: usize) -> u64 {
    seed0
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(u64::from(dgp.id()) << 48)
        .wrapping_add((n as u64) << 16)
        .wrapping_add(replicate as u64)
}

pub struct ReplicateFit {
    pub ise: f64,
    pub interior_count: usize,
    pub epochs: usize,
    pub best_epoch: usize,
}

/// Generates one training set, fits it with an 80/20 split and scores the
/// fitted survival curves against the scenario's ground truth.
pub fn fit_replicate(
    scenario: &Scenario,
    n: usize,
    seed: u64,
    widths: &[usize],
    grid_k: usize,
    init: &InitConfig,
    train_cfg: &TrainConfig,
    refine: usize,
) -> Result<ReplicateFit> {
    let data = scenario.training_set(n, seed)?.normalised()?;
    let plan = split(data.events(), seed, SplitMode::Simulation)?;
    let train = data.subset(&plan.train);
    let val = data.subset(&plan.val);
    let interior_count = adaptive_grid_size(n, scenario.dgp.smoothness());
    let init = InitConfig {
        interior_count,
        ..init.clone()
    };
    let cfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    let out = fit_model(
        &train,
        &val,
        widths,
        grid_k,
        &init,
        &cfg,
        InputScaling::identity(COVARIATES),
        TimeNormalisation {
            origin: 0.0,
            unit: ADMIN_HORIZON,
        },
        seed,
    )?;
    let fine = TimeGrid::uniform(TRUTH_POINTS * refine, 1.0)?;
    let curves = out.model.predict(scenario.test.x.view(), &fine)?;
    let cols: Vec<usize> = (1..=TRUTH_POINTS).map(|j| j * refine).collect();
    let s_hat: Array2<f64> = curves.survival.select(Axis(1), &cols);
    let ise = ise_survival(s_hat.view(), scenario.truth.survival.view(), &scenario.truth.times)?;
    Ok(ReplicateFit {
        ise,
        interior_count,
        epochs: out.log.epochs.len(),
        best_epoch: out.log.best_epoch,
    })
}

/// Worker pool sized by `KAPLAN_WORKERS`, defaulting to rayon's choice.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        match v.parse::<usize>() {
            Ok(k) if k > 0 => b = b.num_threads(k),
            _ => warn!("ignoring {WORKERS_ENV}={v:?}; expected a positive integer"),
        }
    }
    b.build().map_err(|e| crate::Error::Config(format!("worker pool: {e}")))
}

pub fn run_rate_study(cfg: &RateStudyConfig) -> Result<RateStudy> {
    cfg.validate()?;
    let scenarios: Vec<Scenario> = cfg.dgps.iter().map(|&d| Scenario::new(d)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize, usize)> = (0..scenarios.len())
        .flat_map(|s| cfg.ns.iter().flat_map(move |&n| (0..cfg.replicates).map(move |r| (s, n, r))))
        .collect();
    let pool = worker_pool()?;
    let results: Vec<std::result::Result<RateRow, RateFailure>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, n, r)| {
                let sc = &scenarios[s];
                let seed = replicate_seed(cfg.seed0, sc.dgp, n, r);
                let widths = match &cfg.hidden {
                    Some(h) => {
                        let mut w = vec![COVARIATES + 1];
                        w.extend_from_slice(h);
                        w.push(1);
                        w
                    }
                    None => sc.dgp.widths(),
                };
                match fit_replicate(sc, n, seed, &widths, cfg.grid_k, &cfg.init, &cfg.train, cfg.prediction_refine) {
                    Ok(f) => {
                        info!("DGP-{} n={n} rep {r}: ISE {:.3e} ({} epochs)", sc.dgp.id(), f.ise, f.epochs);
                        Ok(RateRow {
                            dgp: sc.dgp,
                            n,
                            replicate: r,
                            seed,
                            interior_count: f.interior_count,
                            ise: f.ise,
                            epochs: f.epochs,
                            best_epoch: f.best_epoch,
                        })
                    }
                    Err(e) => {
                        warn!("DGP-{} n={n} rep {r} failed: {e}", sc.dgp.id());
                        Err(RateFailure {
                            dgp: sc.dgp,
                            n,
                            replicate: r,
                            reason: e.to_string(),
                        })
                    }
                }
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(f) => failures.push(f),
        }
    }
    Ok(summarise(&cfg.dgps, &cfg.ns, rows, failures))
}

pub fn summarise(dgps: &[Dgp], ns: &[usize], rows: Vec<RateRow>, failures: Vec<RateFailure>) -> RateStudy {
    let mut cells = Vec::new();
    let mut slopes = Vec::new();
    for &dgp in dgps {
        let mut pts_n = Vec::new();
        let mut pts_m = Vec::new();
        for &n in ns {
            let vals: Vec<f64> = rows.iter().filter(|r| r.dgp == dgp && r.n == n).map(|r| r.ise).collect();
            if vals.is_empty() {
                continue;
            }
            let s = sorted_copy(&vals);
            let cell = CellSummary {
                dgp,
                n,
                count: vals.len(),
                median: quantile_sorted(&s, 0.5),
                q25: quantile_sorted(&s, 0.25),
                q75: quantile_sorted(&s, 0.75),
            };
            pts_n.push(n);
            pts_m.push(cell.median);
            cells.push(cell);
        }
        let r = f64::from(dgp.smoothness());
        let upper = (pts_n.len() / 2).max(3).min(pts_n.len());
        let from = pts_n.len() - upper;
        slopes.push(SlopeSummary {
            dgp,
            slope_all: slope_fit(&pts_n, &pts_m).ok(),
            slope_upper: slope_fit(&pts_n[from..], &pts_m[from..]).ok(),
            predicted: -2.0 * r / (2.0 * r + 1.0),
        });
    }
    RateStudy {
        rows,
        failures,
        cells,
        slopes,
    }
}
