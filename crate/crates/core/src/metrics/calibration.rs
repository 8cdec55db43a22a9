use log::warn;
use serde::{Deserialize, Serialize};

use super::chi2::chi_square_sf;
use super::km::km_fit;
use crate::error::{Error, Result};

pub const ICI_BINS: usize = 10;
pub const DCAL_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IciResult {
    pub ici: f64,
    /// Bins with nobody observed past `t*`.
    pub flagged_bins: Vec<usize>,
}

/// Decile ICI at `t_star`. `s_at_t` is each subject's predicted survival at
/// `t_star`.
pub fn ici_at(t_star: f64, s_at_t: &[f64], y: &[f64], events: &[bool]) -> Result<IciResult> {
    ici_binned(t_star, s_at_t, y, events, ICI_BINS)
}

/// ICI with `bins` equal-count groups of predicted event probability; each
/// group's observed probability is one minus its Kaplan-Meier at `t_star`.
pub fn ici_binned(t_star: f64, s_at_t: &[f64], y: &[f64], events: &[bool], bins: usize) -> Result<IciResult> {
    let n = s_at_t.len();
    if y.len() != n || events.len() != n {
        return Err(Error::Metric(format!("{n} predictions, {} times, {} indicators", y.len(), events.len())));
    }
    if bins == 0 || n < bins {
        return Err(Error::Metric(format!("{n} subjects cannot fill {bins} bins")));
    }
    let pred: Vec<f64> = s_at_t.iter().map(|s| 1.0 - s).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pred[a].total_cmp(&pred[b]).then(a.cmp(&b)));
    let mut ici = 0.0;
    let mut flagged_bins = Vec::new();
    for b in 0..bins {
        let members = &order[b * n / bins..(b + 1) * n / bins];
        let yb: Vec<f64> = members.iter().map(|&i| y[i]).collect();
        let eb: Vec<bool> = members.iter().map(|&i| events[i]).collect();
        let km = km_fit(&yb, &eb)?;
        let last = members.iter().map(|&i| y[i]).fold(f64::NEG_INFINITY, f64::max);
        if last < t_star && members.iter().any(|&i| y[i] == last && !events[i]) {
            flagged_bins.push(b);
        }
        let observed = 1.0 - km.eval(t_star);
        let mean_pred = members.iter().map(|&i| pred[i]).sum::<f64>() / members.len() as f64;
        ici += members.len() as f64 / n as f64 * (mean_pred - observed).abs();
    }
    if !flagged_bins.is_empty() {
        warn!("ICI: bins {flagged_bins:?} are fully censored before t* = {t_star}");
    }
    Ok(IciResult { ici, flagged_bins })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcalResult {
    pub statistic: f64,
    pub p_value: f64,
    pub counts: Vec<f64>,
}

/// Mass each subject contributes to the D-calibration histogram.
pub fn dcal_counts(s_at_y: &[f64], events: &[bool]) -> Result<Vec<f64>> {
    if s_at_y.len() != events.len() {
        return Err(Error::Metric(format!("{} predictions, {} indicators", s_at_y.len(), events.len())));
    }
    let width = 1.0 / DCAL_BINS as f64;
    let mut counts = vec![0.0; DCAL_BINS];
    for (&s, &e) in s_at_y.iter().zip(events) {
        let s = s.clamp(0.0, 1.0);
        let b = ((s * DCAL_BINS as f64).floor() as usize).min(DCAL_BINS - 1);
        if e {
            counts[b] += 1.0;
        } else if s <= 0.0 {
            counts[0] += 1.0;
        } else {
            let lower = b as f64 * width;
            counts[b] += (s - lower) / s;
            for c in counts.iter_mut().take(b) {
                *c += width / s;
            }
        }
    }
    Ok(counts)
}

/// D-calibration chi-square test of `S(Y_i | x_i)` against uniformity.
pub fn dcal(s_at_y: &[f64], events: &[bool]) -> Result<DcalResult> {
    let counts = dcal_counts(s_at_y, events)?;
    let expected = s_at_y.len() as f64 / DCAL_BINS as f64;
    if expected == 0.0 {
        return Err(Error::Metric("D-calibration of an empty sample".into()));
    }
    let statistic: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    Ok(DcalResult {
        statistic,
        p_value: chi_square_sf(statistic, DCAL_BINS - 1),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ici_is_zero_when_predictions_match_bins() {
        // Two bins, no censoring; each bin's predictions equal its observed
        // event fraction at t* = 1.
        let y: Vec<f64> = (0..20).map(|i| if i % 5 == 0 { 0.5 } else { 2.0 }).collect();
        let e = vec![true; 20];
        let s = vec![0.8; 20];
        let r = ici_binned(1.0, &s, &y, &e, 2).unwrap();
        assert!(r.ici.abs() < 1e-15);
    }

    #[test]
    fn ici_hand_binned_fixture() {
        // Predicted event probabilities 0.05*i; bin 0 holds i < 10.
        let s: Vec<f64> = (0..20).map(|i| 1.0 - 0.05 * i as f64).collect();
        let y: Vec<f64> = (0..20).map(|i| if i % 4 == 0 || i >= 15 { 0.5 } else { 2.0 }).collect();
        let e = vec![true; 20];
        let mean0 = (0..10).map(|i| 0.05 * i as f64).sum::<f64>() / 10.0;
        let mean1 = (10..20).map(|i| 0.05 * i as f64).sum::<f64>() / 10.0;
        let obs0 = 3.0 / 10.0; // i = 0, 4, 8
        let obs1 = 6.0 / 10.0; // i = 12, 15..19
        let expected = 0.5 * (mean0 - obs0).abs() + 0.5 * (mean1 - obs1).abs();
        let r = ici_binned(1.0, &s, &y, &e, 2).unwrap();
        assert!((r.ici - expected).abs() < 1e-14);
    }

    #[test]
    fn ici_is_one_for_maximal_miscalibration() {
        let r = ici_at(1.0, &[1.0; 30], &[0.5; 30], &[true; 30]).unwrap();
        assert!((r.ici - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ici_flags_fully_censored_bins() {
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.2 } else { 2.0 }).collect();
        let e: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let s: Vec<f64> = (0..20).map(|i| 1.0 - 0.01 * i as f64).collect();
        let r = ici_binned(1.0, &s, &y, &e, 2).unwrap();
        assert_eq!(r.flagged_bins, vec![0]);
    }

    #[test]
    fn all_mass_in_one_bin() {
        let r = dcal(&[0.55; 100], &[true; 100]).unwrap();
        assert!((r.statistic - 900.0).abs() < 1e-9);
        assert!(r.p_value < 1e-12);
    }

    #[test]
    fn fully_spread_censored_subject() {
        let c = dcal_counts(&[1.0], &[false]).unwrap();
        assert!(c.iter().all(|&v| (v - 0.1).abs() < 1e-15));
        let c = dcal_counts(&[0.25], &[false]).unwrap();
        assert!((c[0] - 0.4).abs() < 1e-15 && (c[1] - 0.4).abs() < 1e-15 && (c[2] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn size_under_uniform_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let reps = 1000;
        let mut rejections = 0;
        for _ in 0..reps {
            let s: Vec<f64> = (0..500).map(|_| rng.random()).collect();
            if dcal(&s, &[true; 500]).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / reps as f64;
        assert!((0.03..=0.07).contains(&rate), "{rate}");
    }

    proptest! {
        #[test]
        fn mass_is_conserved(rows in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..200)) {
            let s: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let e: Vec<bool> = rows.iter().map(|r| r.1).collect();
            let total: f64 = dcal_counts(&s, &e).unwrap().iter().sum();
            prop_assert!((total - rows.len() as f64).abs() < 1e-9);
        }
    }
}
