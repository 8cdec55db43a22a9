use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid knot vector: {0}")]
    Knots(String),

    #[error("layer {layer}: expected input of width {expected}, got {got}")]
    Dimension {
        layer: usize,
        expected: usize,
        got: usize,
    },

    #[error("invalid network widths {widths:?}: {reason}")]
    Widths { widths: Vec<usize>, reason: String },

    #[error("parameter vector has length {got}, network expects {expected}")]
    ParamLength { expected: usize, got: usize },

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("invalid survival data: {0}")]
    Data(String),

    #[error("training aborted at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("censoring calibration failed: target {target} unreachable, rate bracket [{low_rate}, {high_rate}]")]
    Calibration {
        target: f64,
        low_rate: f64,
        high_rate: f64,
    },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: row {row}: {reason}")]
    Csv {
        path: String,
        row: usize,
        reason: String,
    },

    #[error("split: {0}")]
    Split(String),

    #[error("model file: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    CsvParse(#[from] csv::Error),
}
