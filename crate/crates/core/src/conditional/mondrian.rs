//! Mondrian (category-conditional) conformal prediction: one calibration
//! set per taxonomy category, giving the coverage guarantee within each
//! category rather than only marginally.
//!
//! Small categories are the known failure mode: splitting calibration data
//! shrinks the per-category sets. Below `min_category_size` the predictor
//! falls back to pooled calibration and marks the output `marginal_only`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditional::taxonomy::Taxonomy;
use crate::domain::{
    ConfidenceLevel, IntervalPrediction, LabelUniverse, LabeledExample, PredictionNotes,
    SetPrediction, Target,
};
use crate::error::{Error, Result};
use crate::icp::{CalibrationEntry, CalibrationSet, Smoothing};
use crate::rng::draw_tau;
use crate::scorers::{CandidateScorer, ExampleScorer, RegressionScorer};

/// Default minimum per-category calibration size before pooling.
pub const DEFAULT_MIN_CATEGORY_SIZE: usize = 20;

/// A p-value plus whether it came from the pooled fallback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MondrianPValue {
    pub p: f64,
    pub pooled_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MondrianPredictor {
    taxonomy: Taxonomy,
    /// Indexed by category id; disjoint, and their union is the pooled set.
    per_category: Vec<CalibrationSet>,
    pooled: CalibrationSet,
    min_category_size: usize,
}

impl MondrianPredictor {
    /// Scores the calibration split and routes each example to the category
    /// of (example, observed target).
    pub fn fit<S: ExampleScorer>(
        scorer: &S,
        taxonomy: Taxonomy,
        calibration: &[LabeledExample],
        min_category_size: usize,
    ) -> Result<Self> {
        if calibration.is_empty() {
            return Err(Error::EmptyInput("calibration examples"));
        }
        let mut buckets: Vec<Vec<CalibrationEntry>> = vec![Vec::new(); taxonomy.n_categories()];
        let mut all = Vec::with_capacity(calibration.len());
        for ex in calibration {
            if ex.target.is_none() {
                return Err(Error::MissingTarget(ex.id.clone()));
            }
            let category = taxonomy.categorize_observed(ex)?;
            let entry = CalibrationEntry {
                score: scorer.score_example(ex)?.value(),
                tags: ex.group_tags.clone(),
            };
            buckets[category].push(entry.clone());
            all.push(entry);
        }
        Ok(Self {
            taxonomy,
            per_category: buckets.into_iter().map(CalibrationSet::from_entries).collect(),
            pooled: CalibrationSet::from_entries(all),
            min_category_size,
        })
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn category_calibration(&self, category: usize) -> &CalibrationSet {
        &self.per_category[category]
    }

    pub fn pooled(&self) -> &CalibrationSet {
        &self.pooled
    }

    pub fn min_category_size(&self) -> usize {
        self.min_category_size
    }

    /// The calibration set used for a given category, with the pooled
    /// fallback applied when the category is below the size floor.
    fn active_set(&self, category: usize) -> (&CalibrationSet, bool) {
        let own = &self.per_category[category];
        if own.len() >= self.min_category_size {
            (own, false)
        } else {
            (&self.pooled, true)
        }
    }

    /// p-value of (example, candidate target) against the calibration set of
    /// its own category only.
    pub fn p_value<S: CandidateScorer>(
        &self,
        scorer: &S,
        example: &LabeledExample,
        target: &Target,
        smoothing: Smoothing,
    ) -> Result<MondrianPValue> {
        let category = self.taxonomy.categorize(example, Some(target))?;
        let score = scorer.score_candidate(example, target)?;
        let (set, pooled_fallback) = self.active_set(category);
        Ok(MondrianPValue {
            p: set.p_value(score.value(), smoothing)?,
            pooled_fallback,
        })
    }

    fn set_from_p_values(
        &self,
        p_values: Vec<f64>,
        any_pooled: bool,
        confidence: ConfidenceLevel,
    ) -> SetPrediction {
        let mut pred = SetPrediction::from_p_values(p_values, confidence);
        pred.notes = PredictionNotes {
            marginal_only: any_pooled,
            ..PredictionNotes::default()
        };
        pred
    }

    /// Deterministic category-conditional prediction set. Taxonomies that
    /// reference the target are evaluated per candidate label
    /// (label-conditional prediction).
    pub fn predict_set<S: CandidateScorer>(
        &self,
        scorer: &S,
        example: &LabeledExample,
        universe: &LabelUniverse,
        confidence: ConfidenceLevel,
    ) -> Result<SetPrediction> {
        let mut p_values = Vec::with_capacity(universe.len());
        let mut any_pooled = false;
        for label in universe.ids() {
            let v = self.p_value(
                scorer,
                example,
                &Target::Class(label),
                Smoothing::Deterministic,
            )?;
            any_pooled |= v.pooled_fallback;
            p_values.push(v.p);
        }
        Ok(self.set_from_p_values(p_values, any_pooled, confidence))
    }

    /// Smoothed variant; one tau per label in label-id order.
    pub fn predict_set_smoothed<S: CandidateScorer, R: Rng + ?Sized>(
        &self,
        scorer: &S,
        example: &LabeledExample,
        universe: &LabelUniverse,
        confidence: ConfidenceLevel,
        rng: &mut R,
    ) -> Result<SetPrediction> {
        let mut p_values = Vec::with_capacity(universe.len());
        let mut any_pooled = false;
        for label in universe.ids() {
            let tau = draw_tau(rng);
            let v = self.p_value(
                scorer,
                example,
                &Target::Class(label),
                Smoothing::Smoothed { tau },
            )?;
            any_pooled |= v.pooled_fallback;
            p_values.push(v.p);
        }
        Ok(self.set_from_p_values(p_values, any_pooled, confidence))
    }

    /// Category-conditional interval. Requires a taxonomy that does not
    /// reference the target: a regression candidate would otherwise move
    /// between categories as `y` varies, and no single quantile applies.
    pub fn predict_interval<S: RegressionScorer>(
        &self,
        scorer: &S,
        example: &LabeledExample,
        confidence: ConfidenceLevel,
    ) -> Result<IntervalPrediction> {
        if self.taxonomy.depends_on_target() {
            return Err(Error::Unsupported(
                "category-conditional intervals need a target-free taxonomy".into(),
            ));
        }
        let category = self.taxonomy.categorize(example, None)?;
        let (set, pooled_fallback) = self.active_set(category);
        let est = scorer.estimate(example)?;
        let mut iv = match set.quantile(confidence.epsilon()) {
            None => IntervalPrediction::whole_line(confidence),
            Some(q) => IntervalPrediction::new(
                est.y_hat - q * est.sigma_hat,
                est.y_hat + q * est.sigma_hat,
                confidence,
            ),
        };
        iv.notes.marginal_only = pooled_fallback;
        Ok(iv)
    }
}
