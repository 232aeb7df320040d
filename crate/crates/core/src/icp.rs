//! Split (inductive) conformal prediction: calibration, p-values,
//! prediction sets and intervals.
//!
//! Validity rests on one convention used throughout: the p-value of a test
//! score `a` against calibration scores `a_1..a_n` is
//!
//! - deterministic: `p = (#{a_i >= a} + 1) / (n + 1)`
//! - smoothed:      `p = (#{a_i > a} + tau * (#{a_i = a} + 1)) / (n + 1)`
//!
//! with `tau` uniform on (0, 1]. Smoothing randomizes ties, which realizes
//! the exact-validity correction without perturbing the scores themselves
//! and stays reproducible under a seed. Deterministic p-values are the
//! default for user-facing prediction; smoothed ones drive drift monitoring
//! and validity tests, which need exact uniformity.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    ConfidenceLevel, IntervalPrediction, LabelUniverse, LabeledExample, SetPrediction, Target,
};
use crate::error::{Error, Result};
use crate::rng::draw_tau;
use crate::scorers::{CandidateScorer, ExampleScorer, RegressionScorer};

/// How to resolve rank ties when computing a p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    Deterministic,
    /// `tau` must lie in [0, 1].
    Smoothed { tau: f64 },
}

/// Fractions for the train/calibration(/tuning) partition; the remainder is
/// the test split. The seed fixes the shuffle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub calibration_fraction: f64,
    #[serde(default)]
    pub tuning_fraction: Option<f64>,
    pub seed: u64,
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let tuning = self.tuning_fraction.unwrap_or(0.0);
        let parts = [self.train_fraction, self.calibration_fraction, tuning];
        let sum: f64 = parts.iter().sum();
        let positive = self.train_fraction > 0.0
            && self.calibration_fraction > 0.0
            && self.tuning_fraction.is_none_or(|t| t > 0.0);
        if positive && parts.iter().all(|p| p.is_finite()) && sum <= 1.0 + 1e-12 {
            Ok(())
        } else {
            Err(Error::InvalidSplitFractions(format!(
                "train={} calibration={} tuning={:?}",
                self.train_fraction, self.calibration_fraction, self.tuning_fraction
            )))
        }
    }
}

/// One calibration example: its nonconformity score and group tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub score: f64,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub tags: BTreeSet<String>,
}

/// Sorted nonconformity scores from a held-out labeled split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<CalibrationEntry>", into = "Vec<CalibrationEntry>")]
pub struct CalibrationSet {
    entries: Vec<CalibrationEntry>, // ascending by score
    scores: Vec<f64>,               // entries[i].score, cached for search
}

impl From<Vec<CalibrationEntry>> for CalibrationSet {
    fn from(entries: Vec<CalibrationEntry>) -> Self {
        Self::from_entries(entries)
    }
}

impl From<CalibrationSet> for Vec<CalibrationEntry> {
    fn from(cal: CalibrationSet) -> Self {
        cal.entries
    }
}

impl CalibrationSet {
    pub fn from_entries(mut entries: Vec<CalibrationEntry>) -> Self {
        entries.sort_by(|a, b| a.score.total_cmp(&b.score));
        let scores = entries.iter().map(|e| e.score).collect();
        Self { entries, scores }
    }

    pub fn from_scores(scores: Vec<f64>) -> Self {
        Self::from_entries(
            scores
                .into_iter()
                .map(|score| CalibrationEntry {
                    score,
                    tags: BTreeSet::new(),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Scores in ascending order.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn entries(&self) -> &[CalibrationEntry] {
        &self.entries
    }

    /// p-value of `test_score` against this calibration set.
    pub fn p_value(&self, test_score: f64, smoothing: Smoothing) -> Result<f64> {
        if !test_score.is_finite() {
            return Err(Error::NonFiniteScore(test_score));
        }
        let n = self.scores.len();
        let count_ge = n - self.scores.partition_point(|&s| s < test_score);
        match smoothing {
            Smoothing::Deterministic => Ok((count_ge as f64 + 1.0) / (n as f64 + 1.0)),
            Smoothing::Smoothed { tau } => {
                if !(0.0..=1.0).contains(&tau) {
                    return Err(Error::InvalidTau(tau));
                }
                let count_gt = n - self.scores.partition_point(|&s| s <= test_score);
                let count_eq = count_ge - count_gt;
                Ok((count_gt as f64 + tau * (count_eq as f64 + 1.0)) / (n as f64 + 1.0))
            }
        }
    }

    /// The conformal quantile at significance `eps`: the smallest score `q`
    /// such that any test score `a <= q` has deterministic p-value above
    /// `eps`. Returns `None` when no finite quantile guarantees coverage
    /// (the vacuous, unbounded case).
    ///
    /// The passing rank is found with the exact float comparisons used by
    /// `p_value`, so interval membership and p-value thresholding agree
    /// bit for bit.
    pub fn quantile(&self, eps: f64) -> Option<f64> {
        let n = self.scores.len();
        let g = smallest_passing_rank(n, eps);
        if g == 0 {
            None
        } else {
            Some(self.scores[n - g])
        }
    }
}

/// Smallest `g` in `0..=n` whose p-value `(g + 1) / (n + 1)` exceeds the
/// significance, under the same comparison used for set membership. `g = 0`
/// means even a score above the whole calibration set keeps a p-value above
/// `eps`. Equals `(n + 1) - ceil((1 - eps) * (n + 1))` in exact arithmetic.
fn smallest_passing_rank(n: usize, eps: f64) -> usize {
    let denom = n as f64 + 1.0;
    let mut lo = 0usize; // candidate answer region: predicate false below
    let mut hi = n;
    // Invariant: p(hi) > eps always holds since p(n) = 1 and eps < 1.
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if crate::domain::exceeds_significance((mid as f64 + 1.0) / denom, eps) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Scores every example at its true target and collects the sorted result.
/// Group tags are carried through for audits.
pub fn calibrate<S: ExampleScorer>(
    scorer: &S,
    examples: &[LabeledExample],
) -> Result<CalibrationSet> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("calibration examples"));
    }
    let mut entries = Vec::with_capacity(examples.len());
    for ex in examples {
        if ex.target.is_none() {
            return Err(Error::MissingTarget(ex.id.clone()));
        }
        entries.push(CalibrationEntry {
            score: scorer.score_example(ex)?.value(),
            tags: ex.group_tags.clone(),
        });
    }
    Ok(CalibrationSet::from_entries(entries))
}

/// Deterministic prediction set over the full label universe: p-value per
/// label, set membership by `p > eps`. The empty set is a legitimate output.
pub fn predict_set<S: CandidateScorer>(
    cal: &CalibrationSet,
    scorer: &S,
    example: &LabeledExample,
    universe: &LabelUniverse,
    confidence: ConfidenceLevel,
) -> Result<SetPrediction> {
    let mut p_values = Vec::with_capacity(universe.len());
    for label in universe.ids() {
        let score = scorer.score_candidate(example, &Target::Class(label))?;
        p_values.push(cal.p_value(score.value(), Smoothing::Deterministic)?);
    }
    Ok(SetPrediction::from_p_values(p_values, confidence))
}

/// Smoothed prediction set; draws one tau per label from `rng` in label-id
/// order, so equal seeds give equal sets.
pub fn predict_set_smoothed<S: CandidateScorer, R: Rng + ?Sized>(
    cal: &CalibrationSet,
    scorer: &S,
    example: &LabeledExample,
    universe: &LabelUniverse,
    confidence: ConfidenceLevel,
    rng: &mut R,
) -> Result<SetPrediction> {
    let mut p_values = Vec::with_capacity(universe.len());
    for label in universe.ids() {
        let score = scorer.score_candidate(example, &Target::Class(label))?;
        let tau = draw_tau(rng);
        p_values.push(cal.p_value(score.value(), Smoothing::Smoothed { tau })?);
    }
    Ok(SetPrediction::from_p_values(p_values, confidence))
}

/// Prediction interval `[y_hat - q * sigma_hat, y_hat + q * sigma_hat]`
/// where `q` is the conformal quantile of the calibration scores. With too
/// few calibration points for the requested confidence the interval is the
/// whole real line — explicitly unbounded, never an error, so the coverage
/// guarantee holds for any calibration size.
pub fn predict_interval<S: RegressionScorer>(
    cal: &CalibrationSet,
    scorer: &S,
    example: &LabeledExample,
    confidence: ConfidenceLevel,
) -> Result<IntervalPrediction> {
    let est = scorer.estimate(example)?;
    match cal.quantile(confidence.epsilon()) {
        None => Ok(IntervalPrediction::whole_line(confidence)),
        Some(q) => Ok(IntervalPrediction::new(
            est.y_hat - q * est.sigma_hat,
            est.y_hat + q * est.sigma_hat,
            confidence,
        )),
    }
}
