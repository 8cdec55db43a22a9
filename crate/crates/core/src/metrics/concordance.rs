use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::survival::TimeGrid;

/// Antolini's time-dependent concordance. `s` holds predicted survival on
/// every grid time (column 0 is the origin); each comparable pair reads both
/// curves at the bin of the earlier, event subject.
pub fn c_td(s: ArrayView2<f64>, grid: &TimeGrid, y: &[f64], events: &[bool]) -> Result<f64> {
    check_shapes(s, grid, y, events)?;
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut concordant = 0.0;
    let mut comparable = 0u64;
    for (pos, &i) in order.iter().enumerate() {
        if !events[i] {
            continue;
        }
        let b = grid.bin_index(y[i])?;
        let si = s[[i, b]];
        let later = order[pos + 1..].iter().skip_while(|&&j| y[j] <= y[i]);
        for &j in later {
            comparable += 1;
            let sj = s[[j, b]];
            if si < sj {
                concordant += 1.0;
            } else if si == sj {
                concordant += 0.5;
            }
        }
    }
    if comparable == 0 {
        return Err(Error::Metric("no comparable pairs for C-TD".into()));
    }
    Ok(concordant / comparable as f64)
}

pub(crate) fn check_shapes(s: ArrayView2<f64>, grid: &TimeGrid, y: &[f64], events: &[bool]) -> Result<()> {
    if s.nrows() != y.len() || y.len() != events.len() {
        return Err(Error::Metric(format!(
            "{} prediction rows, {} times, {} indicators",
            s.nrows(),
            y.len(),
            events.len()
        )));
    }
    if s.ncols() != grid.taus().len() {
        return Err(Error::Metric(format!(
            "{} prediction columns for {} grid times",
            s.ncols(),
            grid.taus().len()
        )));
    }
    Ok(())
}
