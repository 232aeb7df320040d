//! Iterative feedback-adjusted scoring for approximate conditional
//! validity.
//!
//! The fit loop rescales nonconformity multiplicatively per region,
//! `alpha' = alpha * exp(delta_g)`, and walks the per-region adjustments by
//! feedback from tuning-split coverage: an under-covered region gets its
//! scores shrunk relative to the pooled calibration set, which raises its
//! p-values and expands its prediction sets; an over-covered region is
//! contracted. Marginal validity is never at stake — any fixed adjusted
//! score is still a valid nonconformity measure — the loop only trades
//! inefficiency between regions.
//!
//! Feedback loops of this shape can oscillate, so the returned state is the
//! evaluated iterate with the smallest recorded max coverage deviation, not
//! the last one. With `max_iterations = 0` or `learning_rate = 0` the
//! adjustments stay zero and predictions are bit-identical to plain ICP.
//!
//! The feedback direction assumes nonnegative base scores (true of the
//! built-in k-NN and residual scorers). Negative scores keep the coverage
//! guarantee but may invert the expand/contract response.

use std::collections::BTreeSet;

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

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IfacmConfig {
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Stop early when every region's tuning coverage is within this of the
    /// confidence level.
    pub tolerance: f64,
}

impl Default for IfacmConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            max_iterations: 20,
            tolerance: 0.01,
        }
    }
}

/// One evaluated iterate: the adjustments in force and the tuning coverage
/// they produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub deltas: Vec<f64>,
    /// Per-region tuning coverage; `None` for regions with no tuning data.
    pub coverage: Vec<Option<f64>>,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CalBase {
    score: f64,
    region: usize,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    tags: BTreeSet<String>,
}

/// Fitted feedback-adjusted predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IfacmSerde", into = "IfacmSerde")]
pub struct IfacmState {
    taxonomy: Taxonomy,
    confidence: ConfidenceLevel,
    deltas: Vec<f64>,
    history: Vec<IterationRecord>,
    region_has_tuning: Vec<bool>,
    warnings: Vec<String>,
    cal_base: Vec<CalBase>,
    adjusted_calibration: CalibrationSet,
}

#[derive(Serialize, Deserialize)]
struct IfacmSerde {
    taxonomy: Taxonomy,
    confidence: ConfidenceLevel,
    deltas: Vec<f64>,
    history: Vec<IterationRecord>,
    region_has_tuning: Vec<bool>,
    warnings: Vec<String>,
    cal_base: Vec<CalBase>,
}

impl TryFrom<IfacmSerde> for IfacmState {
    type Error = Error;
    fn try_from(s: IfacmSerde) -> Result<Self> {
        if s.deltas.len() != s.taxonomy.n_categories() {
            return Err(Error::Taxonomy(
                "adjustment vector does not match the taxonomy".into(),
            ));
        }
        let adjusted_calibration = adjusted_set(&s.cal_base, &s.deltas);
        Ok(IfacmState {
            taxonomy: s.taxonomy,
            confidence: s.confidence,
            deltas: s.deltas,
            history: s.history,
            region_has_tuning: s.region_has_tuning,
            warnings: s.warnings,
            cal_base: s.cal_base,
            adjusted_calibration,
        })
    }
}

impl From<IfacmState> for IfacmSerde {
    fn from(s: IfacmState) -> Self {
        IfacmSerde {
            taxonomy: s.taxonomy,
            confidence: s.confidence,
            deltas: s.deltas,
            history: s.history,
            region_has_tuning: s.region_has_tuning,
            warnings: s.warnings,
            cal_base: s.cal_base,
        }
    }
}

fn adjusted_set(cal_base: &[CalBase], deltas: &[f64]) -> CalibrationSet {
    CalibrationSet::from_entries(
        cal_base
            .iter()
            .map(|c| CalibrationEntry {
                score: c.score * deltas[c.region].exp(),
                tags: c.tags.clone(),
            })
            .collect(),
    )
}

/// Fits per-region adjustments on disjoint calibration and tuning splits.
/// The taxonomy must map examples alone (no target predicates): regions are
/// properties of the input, known at prediction time.
pub fn ifacm_fit<S: ExampleScorer>(
    scorer: &S,
    taxonomy: Taxonomy,
    calibration: &[LabeledExample],
    tuning: &[LabeledExample],
    confidence: ConfidenceLevel,
    config: &IfacmConfig,
) -> Result<IfacmState> {
    if taxonomy.depends_on_target() {
        return Err(Error::Taxonomy(
            "region adjustment needs a target-free taxonomy".into(),
        ));
    }
    if calibration.is_empty() {
        return Err(Error::EmptyInput("calibration examples"));
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::InvalidRate(config.learning_rate));
    }

    let n_regions = taxonomy.n_categories();
    let mut cal_base = Vec::with_capacity(calibration.len());
    for ex in calibration {
        cal_base.push(CalBase {
            score: scorer.score_example(ex)?.value(),
            region: taxonomy.categorize(ex, None)?,
            tags: ex.group_tags.clone(),
        });
    }
    let mut tune_base = Vec::with_capacity(tuning.len());
    for ex in tuning {
        if ex.target.is_none() {
            return Err(Error::MissingTarget(ex.id.clone()));
        }
        tune_base.push((
            scorer.score_example(ex)?.value(),
            taxonomy.categorize(ex, None)?,
        ));
    }

    let mut region_has_tuning = vec![false; n_regions];
    for &(_, g) in &tune_base {
        region_has_tuning[g] = true;
    }
    let mut warnings = Vec::new();
    for (g, has_tuning) in region_has_tuning.iter().enumerate() {
        let in_cal = cal_base.iter().any(|c| c.region == g);
        if in_cal && !has_tuning {
            warnings.push(format!(
                "region {:?} has no tuning examples; its adjustment stays frozen at 0",
                taxonomy.category_name(g)
            ));
        }
    }

    let level = confidence.level();
    let eps = confidence.epsilon();
    let mut deltas = vec![0.0f64; n_regions];
    let mut history: Vec<IterationRecord> = Vec::new();

    for _ in 0..config.max_iterations {
        // (a)+(b): plain ICP over the adjusted scores.
        let adjusted: Vec<f64> = {
            let mut v: Vec<f64> = cal_base
                .iter()
                .map(|c| c.score * deltas[c.region].exp())
                .collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let n = adjusted.len() as f64;

        // (c): per-region tuning coverage under deterministic p-values.
        let mut hits = vec![0usize; n_regions];
        let mut totals = vec![0usize; n_regions];
        for &(score, g) in &tune_base {
            let adj = score * deltas[g].exp();
            let count_ge = adjusted.len() - adjusted.partition_point(|&s| s < adj);
            let p = (count_ge as f64 + 1.0) / (n + 1.0);
            totals[g] += 1;
            if crate::domain::exceeds_significance(p, eps) {
                hits[g] += 1;
            }
        }
        let coverage: Vec<Option<f64>> = (0..n_regions)
            .map(|g| {
                if totals[g] > 0 {
                    Some(hits[g] as f64 / totals[g] as f64)
                } else {
                    None
                }
            })
            .collect();
        let max_deviation = coverage
            .iter()
            .flatten()
            .map(|c| (c - level).abs())
            .fold(0.0f64, f64::max);

        history.push(IterationRecord {
            deltas: deltas.clone(),
            coverage: coverage.clone(),
            max_deviation,
        });
        if max_deviation < config.tolerance {
            break;
        }

        // (d): feedback step; regions without tuning data stay frozen.
        for g in 0..n_regions {
            if let Some(c_g) = coverage[g] {
                deltas[g] -= config.learning_rate * (level - c_g);
            }
        }
    }

    // Keep the evaluated iterate with the smallest max deviation (first on
    // ties); when nothing was evaluated the adjustments are zero.
    let best = history
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.max_deviation.total_cmp(&b.max_deviation).then(ia.cmp(ib)))
        .map(|(i, _)| i);
    let deltas = match best {
        Some(i) => history[i].deltas.clone(),
        None => vec![0.0; n_regions],
    };

    let adjusted_calibration = adjusted_set(&cal_base, &deltas);
    Ok(IfacmState {
        taxonomy,
        confidence,
        deltas,
        history,
        region_has_tuning,
        warnings,
        cal_base,
        adjusted_calibration,
    })
}

impl IfacmState {
    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn confidence(&self) -> ConfidenceLevel {
        self.confidence
    }

    /// Per-region log-adjustments of the selected iterate.
    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// Every evaluated iterate, in order.
    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn adjusted_calibration(&self) -> &CalibrationSet {
        &self.adjusted_calibration
    }

    fn region_notes(&self, region: usize) -> PredictionNotes {
        PredictionNotes {
            unadjusted_region: !self.region_has_tuning[region],
            ..PredictionNotes::default()
        }
    }

    /// p-value of (example, candidate) under the adjusted scores.
    pub fn p_value<S: CandidateScorer>(
        &self,
        scorer: &S,
        example: &LabeledExample,
        target: &Target,
        smoothing: Smoothing,
    ) -> Result<f64> {
        let region = self.taxonomy.categorize(example, None)?;
        let base = scorer.score_candidate(example, target)?.value();
        self.adjusted_calibration
            .p_value(base * self.deltas[region].exp(), smoothing)
    }

    pub fn predict_set<S: CandidateScorer>(
        &self,
        scorer: &S,
        example: &LabeledExample,
        universe: &LabelUniverse,
        confidence: ConfidenceLevel,
    ) -> Result<SetPrediction> {
        let region = self.taxonomy.categorize(example, None)?;
        let factor = self.deltas[region].exp();
        let mut p_values = Vec::with_capacity(universe.len());
        for label in universe.ids() {
            let base = scorer.score_candidate(example, &Target::Class(label))?.value();
            p_values.push(
                self.adjusted_calibration
                    .p_value(base * factor, Smoothing::Deterministic)?,
            );
        }
        let mut pred = SetPrediction::from_p_values(p_values, confidence);
        pred.notes = self.region_notes(region);
        Ok(pred)
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
        let region = self.taxonomy.categorize(example, None)?;
        let factor = self.deltas[region].exp();
        let mut p_values = Vec::with_capacity(universe.len());
        for label in universe.ids() {
            let base = scorer.score_candidate(example, &Target::Class(label))?.value();
            let tau = draw_tau(rng);
            p_values.push(
                self.adjusted_calibration
                    .p_value(base * factor, Smoothing::Smoothed { tau })?,
            );
        }
        let mut pred = SetPrediction::from_p_values(p_values, confidence);
        pred.notes = self.region_notes(region);
        Ok(pred)
    }

    /// Interval under the adjusted scores: the adjusted quantile is mapped
    /// back through the region's scale factor.
    pub fn predict_interval<S: RegressionScorer>(
        &self,
        scorer: &S,
        example: &LabeledExample,
        confidence: ConfidenceLevel,
    ) -> Result<IntervalPrediction> {
        let region = self.taxonomy.categorize(example, None)?;
        let est = scorer.estimate(example)?;
        let mut iv = match self.adjusted_calibration.quantile(confidence.epsilon()) {
            None => IntervalPrediction::whole_line(confidence),
            Some(q) => {
                let q_region = q * (-self.deltas[region]).exp();
                IntervalPrediction::new(
                    est.y_hat - q_region * est.sigma_hat,
                    est.y_hat + q_region * est.sigma_hat,
                    confidence,
                )
            }
        };
        iv.notes = self.region_notes(region);
        Ok(iv)
    }
}
