//! Log-hazard to survival: right-endpoint rectangle integration on a time
//! grid, the censored negative log-likelihood and the log-hazard shrink
//! penalty.

use std::io::{Read, Write};

use log::warn;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{quantile_sorted, sorted_copy};

/// Log-hazards are clamped to this magnitude before exponentiation.
pub const LOG_HAZARD_CLAMP: f64 = 20.0;

pub fn clamp_log_hazard(g: f64) -> f64 {
    g.clamp(-LOG_HAZARD_CLAMP, LOG_HAZARD_CLAMP)
}

/// Strictly increasing evaluation times starting at `tau_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    taus: Vec<f64>,
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TimeGrid::new(v)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.taus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridQuality {
    Regular,
    /// All training times were equal; the grid has a single interval.
    Degenerate,
}

impl TimeGrid {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if taus.len() < 2 {
            return Err(Error::Grid("need tau_0 and at least one more time".into()));
        }
        if taus[0] != 0.0 {
            return Err(Error::Grid(format!("tau_0 must be 0, got {}", taus[0])));
        }
        if taus.iter().any(|t| !t.is_finite()) {
            return Err(Error::Grid("non-finite time".into()));
        }
        if let Some(w) = taus.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Grid(format!("not strictly increasing at {} -> {}", w[0], w[1])));
        }
        Ok(Self { taus })
    }

    /// `K + 1` quantile grid of the training observed times: `tau_k` is the
    /// `k/K` quantile for `k = 1..K`, `tau_0 = 0`, duplicates removed.
    pub fn from_quantiles(y_train: &[f64], k: usize) -> Result<(Self, GridQuality)> {
        if k == 0 {
            return Err(Error::Grid("K must be at least 1".into()));
        }
        if y_train.is_empty() {
            return Err(Error::Grid("no training times".into()));
        }
        let sorted = sorted_copy(y_train);
        let mut taus = vec![0.0];
        for q in 1..=k {
            let v = quantile_sorted(&sorted, q as f64 / k as f64);
            if v > *taus.last().unwrap() {
                taus.push(v);
            }
        }
        let quality = if sorted[0] == sorted[sorted.len() - 1] {
            warn!("all {} training times equal {}; degenerate grid", sorted.len(), sorted[0]);
            GridQuality::Degenerate
        } else {
            GridQuality::Regular
        };
        Ok((Self::new(taus)?, quality))
    }

    /// `K` equal intervals on `[0, horizon]`.
    pub fn uniform(k: usize, horizon: f64) -> Result<Self> {
        Self::new((0..=k).map(|i| horizon * i as f64 / k as f64).collect())
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    /// Number of intervals `K`.
    pub fn k(&self) -> usize {
        self.taus.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.taus[self.k()]
    }

    /// Interval widths `delta_k = tau_k - tau_{k-1}` for `k = 1..K`.
    pub fn widths(&self) -> Vec<f64> {
        self.taus.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Largest `k` with `tau_k <= y`.
    pub fn bin_index(&self, y: f64) -> Result<usize> {
        if y < 0.0 || y.is_nan() {
            return Err(Error::Grid(format!("time {y} is negative")));
        }
        Ok(self.taus.partition_point(|&t| t <= y) - 1)
    }
}

/// Right-censored sample with covariates, observed times in `[0, 1]` and
/// event indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    x: Array2<f64>,
    y: Vec<f64>,
    event: Vec<bool>,
}

impl SurvivalDataset {
    pub fn new(x: Array2<f64>, y: Vec<f64>, event: Vec<bool>) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n || event.len() != n {
            return Err(Error::Data(format!(
                "{} rows, {} times, {} event flags",
                n,
                y.len(),
                event.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite covariate".into()));
        }
        if let Some((i, t)) = y.iter().enumerate().find(|(_, t)| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Data(format!("row {i}: time {t} outside [0, 1]")));
        }
        Ok(Self { x, y, event })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn events(&self) -> &[bool] {
        &self.event
    }

    pub fn event_rate(&self) -> f64 {
        self.event.iter().filter(|&&e| e).count() as f64 / self.n() as f64
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select(ndarray::Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            event: idx.iter().map(|&i| self.event[i]).collect(),
        }
    }

    /// Same outcomes with replaced covariates.
    pub fn with_covariates(&self, x: Array2<f64>) -> Result<Self> {
        Self::new(x, self.y.clone(), self.event.clone())
    }
}

/// Per-subject discrete hazard quantities on a grid (column `k` is `tau_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct HazardCurves {
    pub grid: TimeGrid,
    pub log_hazard: Array2<f64>,
    pub cum_hazard: Array2<f64>,
    pub survival: Array2<f64>,
}

impl HazardCurves {
    pub fn n(&self) -> usize {
        self.survival.nrows()
    }

    /// `S(t | x_i)` read at `bin_index(t)`; constant beyond `tau_K`.
    pub fn survival_at(&self, i: usize, t: f64) -> Result<f64> {
        Ok(self.survival[[i, self.grid.bin_index(t)?]])
    }

    /// Survival curves as CSV: header of grid times `tau_1..tau_K` mapped
    /// through `to_raw`, then one row of survival values per subject.
    pub fn write_csv<W: Write>(&self, out: W, to_raw: impl Fn(f64) -> f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.grid.taus()[1..].iter().map(|&t| format!("{}", to_raw(t))))?;
        for row in self.survival.outer_iter() {
            w.write_record(row.iter().skip(1).map(|s| format!("{s}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a survival CSV written by [`HazardCurves::write_csv`]: returns the
/// header times and an `n x K` survival matrix.
pub fn read_survival_csv<R: Read>(input: R) -> Result<(Vec<f64>, Array2<f64>)> {
    let mut r = csv::Reader::from_reader(input);
    let parse = |s: &str, row: usize| {
        s.trim().parse::<f64>().map_err(|_| Error::Csv {
            path: "<survival csv>".into(),
            row,
            reason: format!("not a number: {s:?}"),
        })
    };
    let times: Vec<f64> = r.headers()?.iter().map(|s| parse(s, 0)).collect::<Result<_>>()?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != times.len() {
            return Err(Error::Csv {
                path: "<survival csv>".into(),
                row: i + 1,
                reason: format!("{} values for {} times", rec.len(), times.len()),
            });
        }
        for s in rec.iter() {
            values.push(parse(s, i + 1)?);
        }
        rows += 1;
    }
    let m = Array2::from_shape_vec((rows, times.len()), values).expect("shape checked per row");
    Ok((times, m))
}

/// Right-endpoint rectangle integration of `exp(g)` on `grid`. `g` has one
/// column per grid time, including `tau_0`.
pub fn integrate_hazard(g: ArrayView2<f64>, grid: &TimeGrid) -> Result<HazardCurves> {
    let cols = grid.taus().len();
    if g.ncols() != cols {
        return Err(Error::Grid(format!(
            "{} log-hazard columns for {} grid times",
            g.ncols(),
            cols
        )));
    }
    let widths = grid.widths();
    let log_hazard = g.mapv(clamp_log_hazard);
    let mut cum = Array2::zeros(g.raw_dim());
    for (grow, mut crow) in log_hazard.outer_iter().zip(cum.outer_iter_mut()) {
        let mut acc = 0.0;
        for k in 1..cols {
            acc += grow[k].exp() * widths[k - 1];
            crow[k] = acc;
        }
    }
    let survival = cum.mapv(|l: f64| (-l).exp());
    Ok(HazardCurves {
        grid: grid.clone(),
        log_hazard,
        cum_hazard: cum,
        survival,
    })
}

/// Mean of `Lambda_i - Delta_i * g_i`.
pub fn nll(g_at_obs: &[f64], cum_at_obs: &[f64], events: &[bool]) -> f64 {
    assert_eq!(g_at_obs.len(), cum_at_obs.len());
    assert_eq!(g_at_obs.len(), events.len());
    let n = g_at_obs.len() as f64;
    g_at_obs
        .iter()
        .zip(cum_at_obs)
        .zip(events)
        .map(|((&g, &l), &e)| if e { l - g } else { l })
        .sum::<f64>()
        / n
}

/// Full-grid NLL of subjects against precomputed curves: each subject reads
/// the curves at its bin `b_i`.
pub fn nll_on_curves(curves: &HazardCurves, y: &[f64], events: &[bool]) -> Result<f64> {
    let mut g = Vec::with_capacity(y.len());
    let mut l = Vec::with_capacity(y.len());
    for (i, &yi) in y.iter().enumerate() {
        let b = curves.grid.bin_index(yi)?;
        g.push(curves.log_hazard[[i, b]]);
        l.push(curves.cum_hazard[[i, b]]);
    }
    Ok(nll(&g, &l, events))
}

/// `lambda * mean(g^2)` over a batch of log-hazards.
pub fn shrink_penalty(g: ArrayView2<f64>, lambda: f64) -> f64 {
    if lambda == 0.0 || g.is_empty() {
        return 0.0;
    }
    lambda * g.iter().map(|v| v * v).sum::<f64>() / g.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn bin_index_examples() {
        let g = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(g.bin_index(0.0).unwrap(), 0);
        assert_eq!(g.bin_index(0.5).unwrap(), 1);
        assert_eq!(g.bin_index(1.0).unwrap(), 2);
        assert_eq!(g.bin_index(3.0).unwrap(), 2);
        assert!(g.bin_index(-0.1).is_err());
        let g4 = TimeGrid::uniform(4, 1.0).unwrap();
        assert_eq!(g4.bin_index(0.6).unwrap(), 2);
    }

    #[test]
    fn bin_index_matches_linear_scan() {
        let g = TimeGrid::new(vec![0.0, 0.1, 0.15, 0.4, 0.41, 0.9]).unwrap();
        for i in 0..=120 {
            let y = i as f64 / 100.0;
            let scan = (0..g.taus().len()).filter(|&k| g.taus()[k] <= y).max().unwrap();
            assert_eq!(g.bin_index(y).unwrap(), scan);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.6, 0.5]).is_err());
    }

    #[test]
    fn constant_zero_hazard_is_exact() {
        let grid = TimeGrid::new(vec![0.0, 0.13, 0.4, 0.77, 1.0]).unwrap();
        let g = Array2::zeros((2, 5));
        let c = integrate_hazard(g.view(), &grid).unwrap();
        for k in 0..5 {
            assert!((c.cum_hazard[[0, k]] - grid.taus()[k]).abs() < 1e-15);
            assert!((c.survival[[1, k]] - (-grid.taus()[k]).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_log_hazard_right_rule_overestimates() {
        let grid = TimeGrid::uniform(4, 1.0).unwrap();
        let g = Array2::from_shape_fn((1, 5), |(_, k)| grid.taus()[k]);
        let c = integrate_hazard(g.view(), &grid).unwrap();
        let rect = 0.25 * (0.25f64.exp() + 0.5f64.exp() + 0.75f64.exp() + 1f64.exp());
        let exact = std::f64::consts::E - 1.0;
        assert!((c.cum_hazard[[0, 4]] - rect).abs() < 1e-14);
        assert!(rect > exact && rect - exact < 0.25 * exact);
    }

    #[test]
    fn single_interval() {
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let g = array![[0.0, 2f64.ln()]];
        let c = integrate_hazard(g.view(), &grid).unwrap();
        assert!((c.cum_hazard[[0, 1]] - 2.0).abs() < 1e-15);
        assert!((c.survival[[0, 1]] - (-2f64).exp()).abs() < 1e-15);
        assert_eq!(c.survival[[0, 0]], 1.0);
    }

    #[test]
    fn extreme_log_hazards_are_clamped() {
        let grid = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let g = array![[0.0, 900.0, -900.0]];
        let c = integrate_hazard(g.view(), &grid).unwrap();
        assert!(c.cum_hazard.iter().all(|v| v.is_finite()));
        assert_eq!(c.log_hazard[[0, 1]], LOG_HAZARD_CLAMP);
        assert!(integrate_hazard(Array2::zeros((1, 2)).view(), &grid).is_err());
    }

    #[test]
    fn nll_examples() {
        assert_eq!(nll(&[0.3, -1.0], &[0.0, 0.0], &[false, false]), 0.0);
        assert_eq!(nll(&[0.0], &[1.0], &[true]), 1.0);
        let v = nll(&[2f64.ln(), 7.0], &[0.5, 0.25], &[true, false]);
        assert!((v - (0.5 - 2f64.ln() + 0.25) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn shrink_examples() {
        let g = array![[1.0, -1.0], [0.0, 2.0]];
        assert_eq!(shrink_penalty(g.view(), 0.0), 0.0);
        assert_eq!(shrink_penalty(g.view(), 1.0), 1.5);
        let twos = Array2::from_elem((3, 4), 2.0);
        assert_eq!(shrink_penalty(twos.view(), 0.5), 2.0);
    }

    #[test]
    fn quantile_grid_examples() {
        let y: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let (g, q) = TimeGrid::from_quantiles(&y, 4).unwrap();
        assert_eq!(q, GridQuality::Regular);
        let expected = [0.0, 0.25, 0.5, 0.75, 1.0];
        for (a, b) in g.taus().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let (g, q) = TimeGrid::from_quantiles(&[0.5; 7], 5).unwrap();
        assert_eq!(q, GridQuality::Degenerate);
        assert_eq!(g.taus(), &[0.0, 0.5]);
        let (g, _) = TimeGrid::from_quantiles(&[0.2, 0.9, 0.4], 1).unwrap();
        assert_eq!(g.taus(), &[0.0, 0.9]);
        assert!(TimeGrid::from_quantiles(&[], 3).is_err());
        assert!(TimeGrid::from_quantiles(&[0.0, 0.0], 3).is_err());
    }

    #[test]
    fn quantile_grid_matches_sort_oracle() {
        let y = [0.9, 0.1, 0.35, 0.35, 0.6, 0.05, 0.72, 0.2];
        let (g, _) = TimeGrid::from_quantiles(&y, 3).unwrap();
        let mut s = y.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let oracle = |q: f64| {
            let h = q * 7.0;
            let lo = h.floor() as usize;
            s[lo] + (h - lo as f64) * (s[(lo + 1).min(7)] - s[lo])
        };
        let expected = [0.0, oracle(1.0 / 3.0), oracle(2.0 / 3.0), oracle(1.0)];
        for (a, b) in g.taus().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn survival_csv_round_trip() {
        let grid = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let g = array![[0.1, 0.2, 0.3], [-1.0, 0.0, 1.0]];
        let c = integrate_hazard(g.view(), &grid).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf, |t| 3.0 * t).unwrap();
        let (times, s) = read_survival_csv(&buf[..]).unwrap();
        assert_eq!(times, vec![1.5, 3.0]);
        assert_eq!(s.dim(), (2, 2));
        assert_eq!(s[[1, 1]], c.survival[[1, 2]]);
    }

    proptest! {
        #[test]
        fn curves_are_monotone_and_consistent(
            gs in proptest::collection::vec(-30.0f64..30.0, 6),
            cuts in proptest::collection::vec(0.01f64..1.0, 5),
        ) {
            let mut taus = vec![0.0];
            let mut acc = 0.0;
            for c in &cuts { acc += c; taus.push(acc); }
            let grid = TimeGrid::new(taus).unwrap();
            let g = Array2::from_shape_vec((1, 6), gs).unwrap();
            let c = integrate_hazard(g.view(), &grid).unwrap();
            for k in 1..6 {
                prop_assert!(c.survival[[0, k]] <= c.survival[[0, k - 1]]);
                prop_assert!(c.cum_hazard[[0, k]] >= c.cum_hazard[[0, k - 1]]);
            }
            for k in 0..6 {
                prop_assert!(c.survival[[0, k]] >= 0.0 && c.survival[[0, k]] <= 1.0);
                prop_assert_eq!(c.survival[[0, k]].to_bits(), (-c.cum_hazard[[0, k]]).exp().to_bits());
            }
        }

        #[test]
        fn constant_log_hazard_gives_scaled_times(c in -5.0f64..5.0, cuts in proptest::collection::vec(0.001f64..0.5, 1..40)) {
            let mut taus = vec![0.0];
            let mut acc = 0.0;
            for d in &cuts { acc += d; taus.push(acc); }
            let grid = TimeGrid::new(taus.clone()).unwrap();
            let g = Array2::from_elem((1, taus.len()), c);
            let curves = integrate_hazard(g.view(), &grid).unwrap();
            for (k, t) in taus.iter().enumerate() {
                let want = c.exp() * t;
                prop_assert!((curves.cum_hazard[[0, k]] - want).abs() <= 8.0 * f64::EPSILON * want.max(f64::MIN_POSITIVE) * (k as f64 + 1.0));
            }
        }
    }
}
