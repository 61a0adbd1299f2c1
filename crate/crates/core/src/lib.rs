//! Urban layout dataset toolkit.

pub mod blocks;
pub mod buildings;
pub mod error;
pub mod export;
pub mod fixture;
pub mod geo;
pub mod ingest;
pub mod labels;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod roadgraph;

pub use error::{Error, Result};
