//! Evaluation of synthetic tables against real data.
//!
//! Fidelity: per-column Jensen–Shannon similarity and pairwise association
//! differences, each normalised by a held-out real split. Utility:
//! real-vs-synthetic discrimination, train-on-synthetic efficacy and
//! augmentation, all with a built-in gradient-boosted tree classifier.

pub mod error;
pub mod fidelity;
pub mod gbt;
pub mod metrics;
pub mod protocols;
pub mod report;

pub use error::{EvalError, Result};
pub use gbt::{Classifier, GbtClassifier, GbtConfig};
pub use report::{EvalInputs, MetricReport};
