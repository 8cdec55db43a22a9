use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::stats::trapezoid;

/// Mean over subjects of the trapezoidal integral of `(s_hat - s_star)^2`
/// over `times`.
pub fn ise_survival(s_hat: ArrayView2<f64>, s_star: ArrayView2<f64>, times: &[f64]) -> Result<f64> {
    if s_hat.dim() != s_star.dim() || s_hat.ncols() != times.len() {
        return Err(Error::Metric(format!(
            "ISE shapes {:?} and {:?} on {} times",
            s_hat.dim(),
            s_star.dim(),
            times.len()
        )));
    }
    if s_hat.nrows() == 0 || times.len() < 2 {
        return Err(Error::Metric("ISE needs subjects and at least two times".into()));
    }
    let total: f64 = s_hat
        .outer_iter()
        .zip(s_star.outer_iter())
        .map(|(a, b)| {
            let sq: Vec<f64> = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).collect();
            trapezoid(times, &sq)
        })
        .sum();
    Ok(total / s_hat.nrows() as f64)
}

/// Least-squares slope of `log2(ise)` on `log2(n)`.
pub fn slope_fit(ns: &[usize], ise: &[f64]) -> Result<f64> {
    if ns.len() != ise.len() || ns.len() < 3 {
        return Err(Error::Metric(format!("slope fit needs >= 3 paired points, got {} and {}", ns.len(), ise.len())));
    }
    if let Some(bad) = ise.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Metric(format!("nonpositive ISE {bad}")));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).log2()).collect();
    let ys: Vec<f64> = ise.iter().map(|v| v.log2()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Metric("all sample sizes equal".into()));
    }
    Ok(sxy / sxx)
}
