pub mod bench;
pub mod bspline;
pub mod kan;
pub mod error;
pub mod metrics;
pub mod model;
pub mod survival;
pub mod simgen;
pub mod train;
pub mod stats;

pub use error::{Error, Result};
