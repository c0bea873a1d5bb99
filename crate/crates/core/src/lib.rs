//! Tabular ensemble learning: data preparation, SMOTE, a cross-validated
//! sweep over base classifiers, and hard-voting / weighted-voting /
//! stacking ensembles over the best of them.

pub mod ensemble;
pub mod error;
pub mod learners;
pub mod matrix;
pub mod metrics;
pub mod modelsel;
pub mod pipeline;
pub mod resample;
pub mod rng;
pub mod synthetic;
pub mod tabular;

pub use error::{Error, Result};
pub use matrix::Matrix;
