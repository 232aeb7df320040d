//! Nonconformity scorers: built-in k-NN measures and adapters for
//! externally computed scores.
//!
//! Scoring is split across three capabilities. A type implements whichever
//! apply:
//!
//! - [`CandidateScorer`]: score an (example, candidate target) pair — the
//!   pluggable strangeness measure at the heart of every conformal
//!   predictor.
//! - [`ExampleScorer`]: score an example at its observed target (or ignore
//!   the target entirely, for unsupervised measures). Calibration and stream
//!   monitoring need only this.
//! - [`RegressionScorer`]: additionally expose the point estimate and local
//!   difficulty, which interval construction inverts analytically.

mod external;
mod knn;
mod residual;

pub use external::{ExternalClassScorer, ExternalRegressionScorer};
pub use knn::{KnnClassScorer, KnnDistanceScorer, KnnRegressor};
pub use residual::{PointRegressor, ResidualRegressionScorer};

use serde::{Deserialize, Serialize};

use crate::domain::{LabeledExample, NonconformityScore, Target};
use crate::error::Result;

/// Point prediction plus local difficulty estimate for regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionEstimate {
    pub y_hat: f64,
    /// Always strictly positive.
    pub sigma_hat: f64,
}

/// Scores an (example, candidate target) pair. Higher = stranger.
pub trait CandidateScorer {
    fn score_candidate(
        &self,
        example: &LabeledExample,
        target: &Target,
    ) -> Result<NonconformityScore>;
}

/// Scores an example on its own. Supervised scorers use the observed target
/// and fail on unlabeled examples; unsupervised scorers ignore the target.
pub trait ExampleScorer {
    fn score_example(&self, example: &LabeledExample) -> Result<NonconformityScore>;
}

/// A candidate scorer of the form `|y - y_hat(x)| / sigma_hat(x)`, which is
/// what regression interval construction inverts.
pub trait RegressionScorer: CandidateScorer {
    fn estimate(&self, example: &LabeledExample) -> Result<RegressionEstimate>;
}

/// Euclidean distance. Both slices must have equal length (checked by
/// callers against the fitted dimensionality).
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn check_dimension(expected: usize, example: &LabeledExample) -> Result<()> {
    if example.features.len() == expected {
        Ok(())
    } else {
        Err(crate::error::Error::DimensionMismatch {
            expected,
            got: example.features.len(),
            at: Some(format!("example {}", example.id)),
        })
    }
}
