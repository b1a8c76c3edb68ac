pub mod changepoint;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod error;
pub mod experts;
pub mod gating;
pub mod hierarchy;
pub mod linalg;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod quantile;
pub mod reconcile;

pub use error::{Error, Result};
pub use hierarchy::{Edge, Hierarchy, Sign};
