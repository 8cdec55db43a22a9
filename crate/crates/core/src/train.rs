//! Mini-batch Adam training under the censored hazard NLL.
//!
//! Each batch evaluates the network only on the sorted unique bins its
//! subjects fall in, integrates on that sub-grid with the right-endpoint rule,
//! and adds the log-hazard shrink penalty. Knot vectors are refit on a
//! schedule and training stops once the validation NLL has not improved on
//! its running minimum for `patience` epochs.

use std::collections::BTreeSet;
use std::io::Write;

use log::{debug, info};
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::{KanNetwork, ParamVector};
use crate::model::HazardModel;
use crate::survival::{clamp_log_hazard, SurvivalDataset, TimeGrid, LOG_HAZARD_CLAMP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ParamLength {
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// When knot vectors are refit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitSchedule {
    /// Once, before the first epoch.
    AtInit,
    /// Every `period` epochs during the first half of training.
    Every(usize),
    /// Explicit epochs; 0 means before the first epoch.
    Epochs(Vec<usize>),
    Never,
}

impl RefitSchedule {
    pub fn epochs(&self, max_epochs: usize) -> Result<BTreeSet<usize>> {
        match self {
            RefitSchedule::AtInit => Ok(BTreeSet::from([0])),
            RefitSchedule::Never => Ok(BTreeSet::new()),
            RefitSchedule::Epochs(e) => Ok(e.iter().copied().collect()),
            RefitSchedule::Every(0) => Err(Error::Config("refit period must be at least 1".into())),
            RefitSchedule::Every(period) => {
                let last = max_epochs / 2;
                Ok((1..)
                    .map(|k| k * period)
                    .take_while(|&e| e <= last)
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub grid_updates: RefitSchedule,
    pub grid_eps: f64,
    pub lambda_shrink: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            batch_size: 128,
            patience: 50,
            max_epochs: 200,
            grid_updates: RefitSchedule::AtInit,
            grid_eps: 0.02,
            lambda_shrink: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<BTreeSet<usize>> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive".into());
        }
        if self.patience > self.max_epochs {
            return bad(format!("patience {} exceeds max_epochs {}", self.patience, self.max_epochs));
        }
        if !(self.lambda_shrink >= 0.0) {
            return bad(format!("lambda_shrink {} must be nonnegative", self.lambda_shrink));
        }
        if !(0.0..=1.0).contains(&self.grid_eps) {
            return bad(format!("grid_eps {} outside [0, 1]", self.grid_eps));
        }
        let epochs = self.grid_updates.epochs(self.max_epochs)?;
        if let Some(&e) = epochs.iter().next_back() {
            if e > self.max_epochs {
                return bad(format!("refit epoch {e} beyond max_epochs {}", self.max_epochs));
            }
        }
        Ok(epochs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_nll: f64,
    pub refit: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epochs at which knots were refit; 0 is before the first epoch.
    pub refit_epochs: Vec<usize>,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "val_nll", "refit"])?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_nll.to_string(),
                u8::from(r.refit).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loss and gradient of one mini-batch.
pub struct BatchLoss {
    pub nll: f64,
    pub shrink: f64,
    pub grad: Option<ParamVector>,
}

impl BatchLoss {
    pub fn total(&self) -> f64 {
        self.nll + self.shrink
    }
}

/// Sub-grid loss of a batch. `x` holds already-scaled covariates, `time_input`
/// maps grid times to network inputs and `bins` are the subjects' `b_i`.
pub fn batch_loss(
    net: &KanNetwork,
    x: ArrayView2<f64>,
    bins: &[usize],
    events: &[bool],
    grid: &TimeGrid,
    time_input: impl Fn(f64) -> f64,
    lambda_shrink: f64,
    with_grad: bool,
) -> Result<BatchLoss> {
    let b = bins.len();
    if b == 0 {
        return Err(Error::Training {
            epoch: 0,
            reason: "empty batch".into(),
        });
    }
    let mut active: Vec<usize> = bins.to_vec();
    active.sort_unstable();
    active.dedup();
    let r_count = active.len();
    let taus = grid.taus();
    let sub_t: Vec<f64> = active.iter().map(|&a| time_input(taus[a])).collect();
    let mut widths = Vec::with_capacity(r_count);
    let mut prev = 0.0;
    for &a in &active {
        widths.push(taus[a] - prev);
        prev = taus[a];
    }
    let pos: Vec<usize> = bins
        .iter()
        .map(|bi| active.binary_search(bi).expect("bin is active"))
        .collect();

    let tape = net.forward_factored_tape(x, &sub_t)?;
    let g = tape.output();
    let inv_b = 1.0 / b as f64;
    let shrink_scale = lambda_shrink / (b * r_count) as f64;
    let mut nll = 0.0;
    let mut shrink = 0.0;
    let mut seed = if with_grad { vec![0.0; g.len()] } else { Vec::new() };
    for i in 0..b {
        let row = &g[i * r_count..(i + 1) * r_count];
        let ri = pos[i];
        let mut cum = 0.0;
        for r in 0..=ri {
            let gc = clamp_log_hazard(row[r]);
            let inc = gc.exp() * widths[r];
            cum += inc;
            if with_grad && row[r].abs() < LOG_HAZARD_CLAMP {
                seed[i * r_count + r] += inv_b * inc;
            }
        }
        nll += cum;
        if events[i] {
            nll -= clamp_log_hazard(row[ri]);
            if with_grad && row[ri].abs() < LOG_HAZARD_CLAMP {
                seed[i * r_count + ri] -= inv_b;
            }
        }
        if lambda_shrink > 0.0 {
            for r in 0..r_count {
                shrink += row[r] * row[r];
                if with_grad {
                    seed[i * r_count + r] += 2.0 * shrink_scale * row[r];
                }
            }
        }
    }
    let grad = with_grad.then(|| net.backward(&tape, &seed));
    Ok(BatchLoss {
        nll: nll * inv_b,
        shrink: shrink * shrink_scale,
        grad,
    })
}

/// Full-grid NLL of a dataset under `model`, integrating every subject on the
/// grid up to its own bin.
pub fn full_grid_nll(model: &HazardModel, data: &SurvivalDataset, grid: &TimeGrid) -> Result<f64> {
    let bins: Vec<usize> = data
        .y()
        .iter()
        .map(|&y| grid.bin_index(y))
        .collect::<Result<_>>()?;
    let max_bin = bins.iter().copied().max().unwrap_or(0);
    let taus = &grid.taus()[..=max_bin];
    let g = model.log_hazard(data.x(), taus)?;
    let widths: Vec<f64> = std::iter::once(0.0)
        .chain(taus.windows(2).map(|w| w[1] - w[0]))
        .collect();
    let mut total = 0.0;
    for (i, (&b, &e)) in bins.iter().zip(data.events()).enumerate() {
        let row = g.row(i);
        let cum: f64 = (1..=b).map(|k| clamp_log_hazard(row[k]).exp() * widths[k]).sum();
        total += cum;
        if e {
            total -= clamp_log_hazard(row[b]);
        }
    }
    Ok(total / data.n() as f64)
}

/// Re-places every edge's knots on the distribution of its inputs over the
/// training points, layer by layer. Returns the number of degenerate edges.
pub fn refit_network(model: &mut HazardModel, data: &SurvivalDataset, grid_eps: f64) -> Result<usize> {
    let xs = model.scaling.covariates(data.x())?;
    let mut z = Array2::zeros((data.n(), xs.ncols() + 1));
    z.slice_mut(ndarray::s![.., ..xs.ncols()]).assign(&xs);
    for (i, &y) in data.y().iter().enumerate() {
        z[[i, xs.ncols()]] = model.scaling.time(y);
    }
    let mut degenerate = 0;
    for l in 0..model.network.depth() {
        let inputs = model.network.layer_inputs(z.view())?;
        let layer_in = &inputs[l];
        let layer = model.network.layer_mut(l);
        for i in 0..layer.d_in() {
            let samples: Vec<f64> = layer_in.column(i).to_vec();
            for j in 0..layer.d_out() {
                let refit = layer.edge(i, j).refit_knots(&samples, grid_eps)?;
                degenerate += usize::from(refit.degenerate);
                *layer.edge_mut(i, j) = refit.edge;
            }
        }
    }
    Ok(degenerate)
}

pub struct FitOutput {
    pub model: HazardModel,
    pub log: TrainingLog,
}

/// Trains `model` on `train`, selecting the epoch with the lowest validation
/// NLL on `grid`.
pub fn fit(
    mut model: HazardModel,
    train: &SurvivalDataset,
    val: &SurvivalDataset,
    grid: &TimeGrid,
    cfg: &TrainConfig,
) -> Result<FitOutput> {
    let refits = cfg.validate()?;
    if train.n() == 0 || val.n() == 0 {
        return Err(Error::Training {
            epoch: 0,
            reason: "empty training or validation set".into(),
        });
    }
    let mut log = TrainingLog::default();
    if refits.contains(&0) {
        refit_network(&mut model, train, cfg.grid_eps)?;
        log.refit_epochs.push(0);
    }
    let bins: Vec<usize> = train
        .y()
        .iter()
        .map(|&y| grid.bin_index(y))
        .collect::<Result<_>>()?;
    let mut xs = model.scaling.covariates(train.x())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.n()).collect();
    let mut params = model.network.params();
    let mut adam = AdamState::new(params.len());
    let mut best = model.clone();
    let mut best_nll = f64::INFINITY;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        let refit = refits.contains(&epoch);
        if refit {
            refit_network(&mut model, train, cfg.grid_eps)?;
            params = model.network.params();
            adam = AdamState::new(params.len());
            xs = model.scaling.covariates(train.x())?;
            log.refit_epochs.push(epoch);
        }
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xs.select(Axis(0), chunk);
            let bb: Vec<usize> = chunk.iter().map(|&i| bins[i]).collect();
            let eb: Vec<bool> = chunk.iter().map(|&i| train.events()[i]).collect();
            let scaling = &model.scaling;
            let loss = batch_loss(
                &model.network,
                xb.view(),
                &bb,
                &eb,
                grid,
                |t| scaling.time(t),
                cfg.lambda_shrink,
                true,
            )?;
            let total = loss.total();
            if !total.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: format!("non-finite batch loss {total}"),
                });
            }
            loss_sum += total;
            batches += 1;
            adam.step(&mut params, loss.grad.as_ref().unwrap(), cfg.learning_rate)?;
            model.network.set_params(&params)?;
        }
        let val_nll = full_grid_nll(&model, val, grid)?;
        if val_nll.is_nan() {
            return Err(Error::Training {
                epoch,
                reason: "validation NLL is NaN".into(),
            });
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_nll,
            refit,
        });
        debug!("epoch {epoch}: train {:.5} val {val_nll:.5}", loss_sum / batches as f64);
        if val_nll < best_nll {
            best_nll = val_nll;
            best = model.clone();
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log.stopped_early = true;
                info!("early stop at epoch {epoch}; best epoch {}", log.best_epoch);
                break;
            }
        }
    }
    log.best_val_nll = best_nll;
    best.grid = grid.clone();
    Ok(FitOutput { model: best, log })
}
