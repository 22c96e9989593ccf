//! Land use / land cover pipeline: raster I/O, cloud masking and median
//! compositing, spectral indices, chip datasets, classifiers, evaluation and
//! urban change mapping.

pub mod change;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod indices;
pub mod models;
pub mod preprocess;
pub mod raster;
pub mod render;
pub mod seed;
pub mod train;

pub use error::{LulcError, Result};
