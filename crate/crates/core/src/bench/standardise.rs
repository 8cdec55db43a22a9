use log::warn;
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::model::InputScaling;
use crate::stats::{mean, std_dev};

/// Per-column z-score statistics estimated on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardiser {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardiser {
    /// Constant columns keep scale 1 and shift 0.
    pub fn fit(x_train: ArrayView2<f64>) -> Self {
        let mut m = Vec::with_capacity(x_train.ncols());
        let mut s = Vec::with_capacity(x_train.ncols());
        for (c, col) in x_train.columns().into_iter().enumerate() {
            let v = col.to_vec();
            let sd = std_dev(&v);
            if sd > 0.0 && sd.is_finite() {
                m.push(mean(&v));
                s.push(sd);
            } else {
                warn!("column {c} is constant on the training rows; left unscaled");
                m.push(0.0);
                s.push(1.0);
            }
        }
        Self { mean: m, sd: s }
    }

    /// Input scaling with z-scored covariates and, if `time` is given, a
    /// z-scored time input from the training times.
    pub fn scaling(&self, time: Option<&[f64]>) -> InputScaling {
        let (time_shift, time_scale) = match time {
            Some(t) => {
                let sd = std_dev(t);
                if sd > 0.0 {
                    (mean(t), sd)
                } else {
                    warn!("training times are constant; time input left unscaled");
                    (0.0, 1.0)
                }
            }
            None => (0.0, 1.0),
        };
        InputScaling {
            covariate_shift: self.mean.clone(),
            covariate_scale: self.sd.clone(),
            time_shift,
            time_scale,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn z_scores_with_training_statistics() {
        let train = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let st = Standardiser::fit(train.view());
        assert_eq!(st.mean, vec![2.0, 0.0]);
        assert_eq!(st.sd, vec![1.0, 1.0]);
        let s = st.scaling(None);
        let out = s.covariates(array![[3.0, 5.0]].view()).unwrap();
        assert_eq!(out, array![[1.0, 5.0]]);
    }

    #[test]
    fn validation_rows_use_training_stats() {
        let train = array![[0.0], [1.0], [2.0], [3.0]];
        let val = array![[10.0], [20.0]];
        let from_train = Standardiser::fit(train.view()).scaling(None).covariates(val.view()).unwrap();
        let own = Standardiser::fit(val.view()).scaling(None).covariates(val.view()).unwrap();
        assert_ne!(from_train, own);
        // sentinel: a huge validation value must not move the statistics
        let st = Standardiser::fit(train.view());
        assert_eq!(st.mean[0], 1.5);
    }

    #[test]
    fn time_input_scaling() {
        let st = Standardiser::fit(array![[1.0], [2.0]].view());
        let s = st.scaling(Some(&[0.2, 0.4, 0.6]));
        assert!((s.time(0.4)).abs() < 1e-15);
        assert!((s.time(0.6) - 1.0).abs() < 1e-12);
        assert_eq!(st.scaling(None).time(0.6), 0.6);
    }
}
