//! Survival evaluation: concordance, Brier score, calibration and the
//! simulation-only integrated squared error.

mod brier;
mod calibration;
mod chi2;
mod concordance;
mod ise;
mod km;

pub use brier::{brier_at, ibs, IbsResult, IBS_UPPER_QUANTILE};
pub use calibration::{dcal, dcal_counts, ici_at, ici_binned, DcalResult, IciResult, DCAL_BINS, ICI_BINS};
pub use chi2::{chi_square_sf, gamma_q, ln_gamma};
pub use concordance::c_td;
pub use ise::{ise_survival, slope_fit};
pub use km::{km_censor, km_fit, KmCurve};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::survival::{nll_on_curves, HazardCurves};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub c_td: f64,
    pub ibs: f64,
    pub ici_median: f64,
    pub dcal_statistic: f64,
    pub dcal_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ise_s: Option<f64>,
    pub nll_test: f64,
    pub ibs_excluded: usize,
    pub ici_flagged_bins: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// All grid-based metrics of predicted curves against observed outcomes.
/// `censor` is the training-set censoring KM and `t_star` the ICI time.
pub fn evaluate(curves: &HazardCurves, y: &[f64], events: &[bool], censor: &KmCurve, t_star: f64) -> Result<MetricReport> {
    let s = curves.survival.view();
    let grid = &curves.grid;
    let c = c_td(s, grid, y, events)?;
    let brier = ibs(s, grid, y, events, censor)?;
    let s_star: Vec<f64> = (0..y.len()).map(|i| curves.survival_at(i, t_star)).collect::<Result<_>>()?;
    let ici = ici_at(t_star, &s_star, y, events)?;
    let s_y: Vec<f64> = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| curves.survival_at(i, yi))
        .collect::<Result<_>>()?;
    let d = dcal(&s_y, events)?;
    Ok(MetricReport {
        c_td: c,
        ibs: brier.ibs,
        ici_median: ici.ici,
        dcal_statistic: d.statistic,
        dcal_p: d.p_value,
        ise_s: None,
        nll_test: nll_on_curves(curves, y, events)?,
        ibs_excluded: brier.excluded,
        ici_flagged_bins: ici.flagged_bins,
        seed: None,
        split: None,
        config_hash: None,
    })
}
