//! Evaluation toolkit for pen-animal video annotations.
//!
//! The crate validates LabelMe polygon files and one-hot ethogram sheets,
//! pairs external model predictions with ground truth under a greedy IoU
//! rule, and computes detection AP, classification and group-welfare
//! metrics. A seeded scene generator with an outcome ledger provides exact
//! expected values for every metric.

pub mod error;
pub mod folds;
pub mod geometry;
pub mod matching;
pub mod metrics;
pub mod schema;
pub mod synthetic;
pub mod welfare;

pub use error::{Error, Location, Result};
