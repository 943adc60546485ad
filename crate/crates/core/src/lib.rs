//! Routing engine that dispatches dialogue turns between small and large
//! state-tracking experts by nearest-neighbor majority vote over expert pools.

pub mod dialogue;
pub mod embedding;
pub mod error;
pub mod experts;
pub mod metrics;
pub mod rng;
pub mod routing;
pub mod similarity;
pub mod simulate;
pub mod supervision;
pub mod workflow;

pub use error::{Error, Result};
