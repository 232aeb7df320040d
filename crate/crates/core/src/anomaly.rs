//! Conformal anomaly detection: flag examples whose conformal p-value falls
//! at or below a user rate `epsilon`, inheriting a guaranteed false alarm
//! rate on exchangeable data.
//!
//! Note the orientation: anomaly detection flags `p <= epsilon` (inclusive),
//! while prediction sets keep labels with `p > epsilon`. Stating both here
//! once: a point is an anomaly exactly when it would be excluded from the
//! prediction region at confidence `1 - epsilon`.
//!
//! Label-free mode pairs this with an unsupervised scorer such as
//! [`crate::scorers::KnnDistanceScorer`] (sum of k nearest distances to the
//! reference set, over the input features themselves); labeled mode accepts
//! any supervised scorer, probing the feature-target relationship instead.
//! The reference scores are an ordinary [`CalibrationSet`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::LabeledExample;
use crate::error::{Error, Result};
use crate::icp::{CalibrationSet, Smoothing};
use crate::rng::draw_tau;
use crate::scorers::ExampleScorer;

/// Verdict for one example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyVerdict {
    pub p_value: f64,
    /// The rate `epsilon` the p-value was compared against.
    pub threshold: f64,
    /// `p_value <= threshold`.
    pub is_anomaly: bool,
    pub score: f64,
}

/// Scores a reference split into a calibration set for anomaly detection.
/// Unlike `icp::calibrate`, targets are not demanded up front: label-free
/// mode scores the features alone, and a supervised scorer will still fail
/// per example when a needed target is missing.
pub fn reference_scores<S: ExampleScorer>(
    scorer: &S,
    examples: &[LabeledExample],
) -> Result<CalibrationSet> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("reference examples"));
    }
    let scores = examples
        .iter()
        .map(|ex| scorer.score_example(ex).map(|s| s.value()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CalibrationSet::from_scores(scores))
}

/// Smoothed conformal anomaly test of one example against reference scores.
pub fn detect<S: ExampleScorer>(
    reference: &CalibrationSet,
    example: &LabeledExample,
    scorer: &S,
    epsilon: f64,
    tau: f64,
) -> Result<AnomalyVerdict> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidRate(epsilon));
    }
    let score = scorer.score_example(example)?.value();
    let p_value = reference.p_value(score, Smoothing::Smoothed { tau })?;
    Ok(AnomalyVerdict {
        p_value,
        threshold: epsilon,
        // The complement of set membership: flagged exactly when the point
        // would fall outside the prediction region at confidence 1-epsilon.
        is_anomaly: !crate::domain::exceeds_significance(p_value, epsilon),
        score,
    })
}

/// Verdicts for a whole batch plus the alarm-rate summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDetection {
    pub verdicts: Vec<AnomalyVerdict>,
    pub alarm_count: usize,
    /// `None` for an empty batch.
    pub alarm_rate: Option<f64>,
}

/// Elementwise [`detect`] with a shared tau stream drawn from `rng` in batch
/// order.
pub fn batch_detect<S: ExampleScorer, R: Rng + ?Sized>(
    reference: &CalibrationSet,
    batch: &[LabeledExample],
    scorer: &S,
    epsilon: f64,
    rng: &mut R,
) -> Result<BatchDetection> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidRate(epsilon));
    }
    let mut verdicts = Vec::with_capacity(batch.len());
    for example in batch {
        let tau = draw_tau(rng);
        verdicts.push(detect(reference, example, scorer, epsilon, tau)?);
    }
    let alarm_count = verdicts.iter().filter(|v| v.is_anomaly).count();
    let alarm_rate = if verdicts.is_empty() {
        None
    } else {
        Some(alarm_count as f64 / verdicts.len() as f64)
    };
    Ok(BatchDetection {
        verdicts,
        alarm_count,
        alarm_rate,
    })
}
