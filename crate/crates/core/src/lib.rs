//! Conformal prediction toolkit.
//!
//! Wraps any point predictor — built-in k-NN models or externally computed
//! score tables — to produce prediction sets and intervals with guaranteed
//! marginal coverage, plus the machinery that turns that guarantee into an
//! operational tool:
//!
//! - [`icp`]: split (inductive) conformal prediction — calibration, smoothed
//!   and deterministic p-values, label sets, regression intervals.
//! - [`conditional`]: Mondrian category-conditional calibration and the
//!   iterative feedback-adjusted scoring loop for approximate conditional
//!   validity across subgroups.
//! - [`monitor`]: online conformal p-values and betting martingales that
//!   grow under distribution drift, with Ville-bounded false alarms.
//! - [`anomaly`]: conformal anomaly detection with a guaranteed false alarm
//!   rate.
//! - [`audit`]: coverage, inefficiency, calibration-curve and subgroup-bias
//!   reporting.
//! - [`data`]: CSV dataset ingestion, split management, and the synthetic
//!   generators used by the verification suites.

pub mod anomaly;
pub mod audit;
pub mod conditional;
pub mod data;
pub mod domain;
pub mod error;
pub mod icp;
pub mod monitor;
pub mod rng;
pub mod scorers;
pub mod stats;

pub use domain::{
    to_nonconformity, ConfidenceLevel, IntervalPrediction, LabelId, LabelUniverse, LabeledExample,
    NonconformityScore, Prediction, PredictionNotes, SetPrediction, Target,
};
pub use error::{Error, Result};
