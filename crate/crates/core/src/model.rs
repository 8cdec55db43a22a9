//! A fitted hazard model: the KAN plus the input normalisation it was trained
//! with, serialisable as one versioned JSON document.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::KanNetwork;
use crate::stats::{quantile_sorted, sorted_copy};
use crate::survival::{integrate_hazard, HazardCurves, TimeGrid};

pub const MODEL_SCHEMA: &str = "kaplan-hr/model/v1";

/// Affine maps applied to raw covariates and to (normalised) time before they
/// reach the network: `(v - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub covariate_shift: Vec<f64>,
    pub covariate_scale: Vec<f64>,
    pub time_shift: f64,
    pub time_scale: f64,
}

impl InputScaling {
    pub fn identity(d: usize) -> Self {
        Self {
            covariate_shift: vec![0.0; d],
            covariate_scale: vec![1.0; d],
            time_shift: 0.0,
            time_scale: 1.0,
        }
    }

    pub fn d(&self) -> usize {
        self.covariate_shift.len()
    }

    pub fn covariates(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.d() {
            return Err(Error::Dimension {
                layer: 0,
                expected: self.d(),
                got: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for (c, mut col) in out.columns_mut().into_iter().enumerate() {
            let (s, k) = (self.covariate_shift[c], self.covariate_scale[c]);
            col.mapv_inplace(|v| (v - s) / k);
        }
        Ok(out)
    }

    pub fn time(&self, t: f64) -> f64 {
        (t - self.time_shift) / self.time_scale
    }

    pub fn times(&self, t: &[f64]) -> Vec<f64> {
        t.iter().map(|&v| self.time(v)).collect()
    }
}

/// Maps raw observed times to the `[0, 1]` scale the model integrates on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeNormalisation {
    pub origin: f64,
    pub unit: f64,
}

impl TimeNormalisation {
    pub fn identity() -> Self {
        Self { origin: 0.0, unit: 1.0 }
    }

    pub fn to_model(&self, raw: f64) -> f64 {
        (raw - self.origin) / self.unit
    }

    pub fn to_raw(&self, t: f64) -> f64 {
        self.origin + t * self.unit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardModel {
    pub network: KanNetwork,
    pub scaling: InputScaling,
    pub time: TimeNormalisation,
    /// Prediction grid built from the training observed times.
    pub grid: TimeGrid,
    /// Training observed-time quantiles at levels `0, 1/Q, .., 1`, used to
    /// rebuild quantile grids of other sizes.
    #[serde(default)]
    pub time_quantiles: Vec<f64>,
    /// Covariate column names, in network input order.
    #[serde(default)]
    pub features: Vec<String>,
}

pub const TIME_QUANTILE_LEVELS: usize = 1000;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    widths: Vec<usize>,
    degree: usize,
    interior_count: usize,
    #[serde(flatten)]
    model: HazardModel,
}

impl HazardModel {
    pub fn new(network: KanNetwork, scaling: InputScaling, time: TimeNormalisation, grid: TimeGrid) -> Result<Self> {
        if network.input_dim() != scaling.d() + 1 {
            return Err(Error::Dimension {
                layer: 0,
                expected: scaling.d() + 1,
                got: network.input_dim(),
            });
        }
        Ok(Self {
            network,
            scaling,
            time,
            grid,
            time_quantiles: Vec::new(),
            features: Vec::new(),
        })
    }

    /// Records the quantile summary of the training observed times.
    pub fn with_training_times(mut self, y_train: &[f64]) -> Self {
        let sorted = sorted_copy(y_train);
        self.time_quantiles = (0..=TIME_QUANTILE_LEVELS)
            .map(|q| quantile_sorted(&sorted, q as f64 / TIME_QUANTILE_LEVELS as f64))
            .collect();
        self
    }

    /// Quantile grid with `k` intervals from the stored training summary,
    /// interpolating linearly between stored levels.
    pub fn quantile_grid(&self, k: usize) -> Result<TimeGrid> {
        if self.time_quantiles.len() < 2 {
            return Err(Error::Model("no training time summary stored".into()));
        }
        if k == 0 {
            return Err(Error::Grid("K must be at least 1".into()));
        }
        let levels = (self.time_quantiles.len() - 1) as f64;
        let mut taus = vec![0.0];
        for q in 1..=k {
            let h = levels * q as f64 / k as f64;
            let lo = (h.floor() as usize).min(self.time_quantiles.len() - 2);
            let v = self.time_quantiles[lo] + (h - lo as f64) * (self.time_quantiles[lo + 1] - self.time_quantiles[lo]);
            if v > *taus.last().unwrap() {
                taus.push(v);
            }
        }
        TimeGrid::new(taus)
    }

    /// Column names to read covariates by, falling back to `x1..xd`.
    pub fn feature_names(&self) -> Vec<String> {
        if self.features.len() == self.scaling.d() {
            self.features.clone()
        } else {
            (1..=self.scaling.d()).map(|c| format!("x{c}")).collect()
        }
    }

    /// Log-hazard for each raw covariate row at each normalised time.
    pub fn log_hazard(&self, x: ArrayView2<f64>, taus: &[f64]) -> Result<Array2<f64>> {
        let xs = self.scaling.covariates(x)?;
        self.network.forward_factored(xs.view(), &self.scaling.times(taus))
    }

    pub fn predict(&self, x: ArrayView2<f64>, grid: &TimeGrid) -> Result<HazardCurves> {
        let g = self.log_hazard(x, grid.taus())?;
        integrate_hazard(g.view(), grid)
    }

    pub fn predict_default(&self, x: ArrayView2<f64>) -> Result<HazardCurves> {
        self.predict(x, &self.grid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let first = &self.network.layers()[0].edges()[0];
        let file = ModelFile {
            schema: MODEL_SCHEMA.into(),
            widths: self.network.widths().to_vec(),
            degree: first.knots().degree(),
            interior_count: first.knots().interior_count(),
            model: self.clone(),
        };
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, &file)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if file.schema != MODEL_SCHEMA {
            return Err(Error::Model(format!(
                "unsupported schema {:?}, expected {MODEL_SCHEMA:?}",
                file.schema
            )));
        }
        if file.widths != file.model.network.widths() {
            return Err(Error::Model("widths do not match the stored layers".into()));
        }
        let m = file.model;
        let mut model = Self::new(m.network, m.scaling, m.time, m.grid)?;
        model.time_quantiles = m.time_quantiles;
        model.features = m.features;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kan::InitConfig;

    #[test]
    fn save_load_preserves_predictions() {
        let net = KanNetwork::init(&[3, 2, 1], &InitConfig::default(), 4).unwrap();
        let scaling = InputScaling {
            covariate_shift: vec![0.5, -1.0],
            covariate_scale: vec![2.0, 0.5],
            time_shift: 0.3,
            time_scale: 0.2,
        };
        let grid = TimeGrid::new(vec![0.0, 0.2, 0.7, 1.0]).unwrap();
        let model = HazardModel::new(net, scaling, TimeNormalisation { origin: 1.0, unit: 9.0 }, grid)
            .unwrap()
            .with_training_times(&[0.1, 0.5, 0.2, 0.9]);
        let model = HazardModel {
            features: vec!["age".into(), "dose".into()],
            ..model
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = HazardModel::load(&path).unwrap();
        assert_eq!(back, model);
        let x = Array2::from_shape_vec((2, 2), vec![0.1, 0.2, 3.0, -4.0]).unwrap();
        assert_eq!(back.predict_default(x.view()).unwrap(), model.predict_default(x.view()).unwrap());
    }

    #[test]
    fn quantile_grid_matches_direct_quantiles() {
        let y: Vec<f64> = (0..=200).map(|i| (i as f64 / 200.0).powi(2)).collect();
        let net = KanNetwork::init(&[2, 1], &InitConfig::default(), 0).unwrap();
        let (direct, _) = TimeGrid::from_quantiles(&y, 8).unwrap();
        let model = HazardModel::new(net, InputScaling::identity(1), TimeNormalisation::identity(), direct.clone())
            .unwrap()
            .with_training_times(&y);
        let rebuilt = model.quantile_grid(8).unwrap();
        for (a, b) in rebuilt.taus().iter().zip(direct.taus()) {
            assert!((a - b).abs() < 1e-12);
        }
        let fine = model.quantile_grid(300).unwrap();
        assert_eq!(fine.k(), 300);
    }

    #[test]
    fn rejects_foreign_schema() {
        let net = KanNetwork::init(&[2, 1], &InitConfig::default(), 0).unwrap();
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let model = HazardModel::new(net, InputScaling::identity(1), TimeNormalisation::identity(), grid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replace(MODEL_SCHEMA, "other/v9");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(HazardModel::load(&path), Err(Error::Model(_))));
    }

    #[test]
    fn network_must_match_covariate_count() {
        let net = KanNetwork::init(&[4, 1], &InitConfig::default(), 0).unwrap();
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        assert!(HazardModel::new(net, InputScaling::identity(2), TimeNormalisation::identity(), grid).is_err());
    }
}
