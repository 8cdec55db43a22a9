use log::warn;
use ndarray::ArrayView2;

use super::concordance::check_shapes;
use super::km::KmCurve;
use crate::error::{Error, Result};
use crate::stats::{quantile_sorted, sorted_copy, trapezoid};
use crate::survival::TimeGrid;

pub const IBS_UPPER_QUANTILE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct IbsResult {
    pub ibs: f64,
    /// Subject-time pairs dropped because their censoring weight was zero.
    pub excluded: usize,
    pub times: Vec<f64>,
    pub brier: Vec<f64>,
}

/// IPCW Brier score at `t` with censoring survival `censor`.
pub fn brier_at(s_t: &[f64], t: f64, y: &[f64], events: &[bool], censor: &KmCurve) -> (f64, usize) {
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for ((&s, &yi), &e) in s_t.iter().zip(y).zip(events) {
        if yi <= t && e {
            let w = censor.eval_left(yi);
            if w <= 0.0 {
                excluded += 1;
                continue;
            }
            sum += s * s / w;
        } else if yi > t {
            let w = censor.eval(t);
            if w <= 0.0 {
                excluded += 1;
                continue;
            }
            sum += (1.0 - s) * (1.0 - s) / w;
        }
        used += 1;
    }
    (sum / used.max(1) as f64, excluded)
}

/// Integrated Brier score over the grid times in `[tau_1, q90(y)]`,
/// normalised by the length of that range.
pub fn ibs(s: ArrayView2<f64>, grid: &TimeGrid, y: &[f64], events: &[bool], censor: &KmCurve) -> Result<IbsResult> {
    check_shapes(s, grid, y, events)?;
    if y.is_empty() {
        return Err(Error::Metric("IBS of an empty sample".into()));
    }
    let upper = quantile_sorted(&sorted_copy(y), IBS_UPPER_QUANTILE);
    let cols: Vec<usize> = (1..grid.taus().len()).filter(|&k| grid.taus()[k] <= upper).collect();
    if cols.is_empty() {
        return Err(Error::Metric(format!("no grid time in [tau_1, {upper}]")));
    }
    let mut times = Vec::with_capacity(cols.len());
    let mut brier = Vec::with_capacity(cols.len());
    let mut excluded = 0;
    for &k in &cols {
        let t = grid.taus()[k];
        let col: Vec<f64> = s.column(k).to_vec();
        let (bs, ex) = brier_at(&col, t, y, events, censor);
        times.push(t);
        brier.push(bs);
        excluded += ex;
    }
    if excluded > 0 {
        warn!("IBS: {excluded} subject-time pairs had zero censoring weight");
    }
    let ibs = if times.len() == 1 {
        brier[0]
    } else {
        trapezoid(&times, &brier) / (times[times.len() - 1] - times[0])
    };
    Ok(IbsResult {
        ibs,
        excluded,
        times,
        brier,
    })
}
