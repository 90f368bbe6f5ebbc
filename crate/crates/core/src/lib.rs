pub mod body;
pub mod container;
pub mod error;
pub mod fixtures;
pub mod generators;
pub mod geometry;
pub mod metrics;
pub mod optimizer;
pub mod placement;
pub mod scene;

pub use error::{Error, Result};
