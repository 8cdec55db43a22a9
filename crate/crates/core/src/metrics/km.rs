use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Product-limit survival estimate, stored at its distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl KmCurve {
    /// `S(t)`, right-continuous.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    /// `S(t-)`, the value just before `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }
}

/// Kaplan-Meier estimate. At tied times events are counted before
/// censorings, so censored subjects are still at risk.
pub fn km_fit(y: &[f64], events: &[bool]) -> Result<KmCurve> {
    if y.len() != events.len() {
        return Err(Error::Metric(format!("{} times but {} indicators", y.len(), events.len())));
    }
    if y.is_empty() {
        return Err(Error::Metric("Kaplan-Meier needs at least one subject".into()));
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut curve = KmCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
    };
    let mut s = 1.0;
    let mut remaining = y.len();
    let mut i = 0;
    while i < order.len() {
        let t = y[order[i]];
        let mut d = 0;
        let mut m = 0;
        while i + m < order.len() && y[order[i + m]] == t {
            d += usize::from(events[order[i + m]]);
            m += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / remaining as f64;
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(remaining);
            curve.events.push(d);
        }
        remaining -= m;
        i += m;
    }
    Ok(curve)
}

/// Kaplan-Meier estimate of the censoring distribution.
pub fn km_censor(y: &[f64], events: &[bool]) -> Result<KmCurve> {
    let flipped: Vec<bool> = events.iter().map(|e| !e).collect();
    km_fit(y, &flipped)
}
