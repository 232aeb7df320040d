//! Normalized residual scorer for regression:
//! `alpha(x, y) = |y - y_hat(x)| / sigma_hat(x)`.

use serde::{Deserialize, Serialize};

use crate::domain::{LabeledExample, NonconformityScore, Target};
use crate::error::{Error, Result};
use crate::scorers::knn::{KnnDistanceScorer, KnnRegressor};
use crate::scorers::{
    euclidean, CandidateScorer, ExampleScorer, RegressionEstimate, RegressionScorer,
};

/// A fitted point predictor for real targets.
pub trait PointRegressor {
    fn predict(&self, example: &LabeledExample) -> Result<f64>;
}

impl PointRegressor for KnnRegressor {
    fn predict(&self, example: &LabeledExample) -> Result<f64> {
        self.predict_features(&example.features)
    }
}

/// Local difficulty estimate: mean absolute training residual among the `k`
/// nearest training points, plus a strictly positive floor `beta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Difficulty {
    k: usize,
    features: Vec<Vec<f64>>,
    abs_residuals: Vec<f64>,
    beta: f64,
}

impl Difficulty {
    fn sigma_hat(&self, query: &[f64]) -> f64 {
        let mut dists: Vec<(f64, usize)> = self
            .features
            .iter()
            .enumerate()
            .map(|(i, p)| (euclidean(p, query), i))
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = self.k.min(dists.len());
        let mean: f64 =
            dists[..k].iter().map(|&(_, i)| self.abs_residuals[i]).sum::<f64>() / k as f64;
        mean + self.beta
    }
}

/// Interquartile range with linear interpolation between order statistics.
fn interquartile_range(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| -> f64 {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    q(0.75) - q(0.25)
}

/// Residual-based regression nonconformity around any point predictor.
///
/// With normalization enabled, the score is divided by a local difficulty
/// estimate so that intervals widen where the model is less reliable; with
/// it disabled, `sigma_hat` is identically 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualRegressionScorer<M> {
    model: M,
    difficulty: Option<Difficulty>,
}

impl ResidualRegressionScorer<KnnRegressor> {
    /// Fraction of the training targets' interquartile range used as the
    /// difficulty floor `beta`.
    pub const BETA_IQR_FRACTION: f64 = 1e-6;

    /// Built-in configuration: k-NN mean point predictor, optional k-NN
    /// difficulty normalization fitted on the same training split.
    pub fn fit_knn(
        train: &[LabeledExample],
        k_predict: usize,
        normalize: bool,
    ) -> Result<Self> {
        let model = KnnRegressor::fit(train, k_predict)?;
        if !normalize {
            return Ok(Self::new(model));
        }
        let iqr = interquartile_range(model.training_targets());
        // Degenerate targets (zero spread) still need beta > 0.
        let beta = (Self::BETA_IQR_FRACTION * iqr).max(f64::EPSILON);
        let (features, abs_residuals) = model.training_residuals()?;
        let difficulty = Difficulty {
            k: KnnDistanceScorer::DEFAULT_K.min(features.len()),
            features,
            abs_residuals,
            beta,
        };
        Ok(Self {
            model,
            difficulty: Some(difficulty),
        })
    }
}

impl<M: PointRegressor> ResidualRegressionScorer<M> {
    /// Unnormalized variant: `sigma_hat == 1`.
    pub fn new(model: M) -> Self {
        Self {
            model,
            difficulty: None,
        }
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn is_normalized(&self) -> bool {
        self.difficulty.is_some()
    }
}

impl<M: PointRegressor> CandidateScorer for ResidualRegressionScorer<M> {
    fn score_candidate(
        &self,
        example: &LabeledExample,
        target: &Target,
    ) -> Result<NonconformityScore> {
        let y = target.as_real().ok_or_else(|| Error::TargetKindMismatch {
            id: example.id.clone(),
            expected: "real",
        })?;
        let est = self.estimate(example)?;
        NonconformityScore::new((y - est.y_hat).abs() / est.sigma_hat)
    }
}

impl<M: PointRegressor> RegressionScorer for ResidualRegressionScorer<M> {
    fn estimate(&self, example: &LabeledExample) -> Result<RegressionEstimate> {
        let y_hat = self.model.predict(example)?;
        let sigma_hat = match &self.difficulty {
            Some(d) => d.sigma_hat(&example.features),
            None => 1.0,
        };
        Ok(RegressionEstimate { y_hat, sigma_hat })
    }
}

impl<M: PointRegressor> ExampleScorer for ResidualRegressionScorer<M> {
    fn score_example(&self, example: &LabeledExample) -> Result<NonconformityScore> {
        let y = example.real()?;
        self.score_candidate(example, &Target::Real(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Fixed predictor for arithmetic checks.
    struct Constant(f64);
    impl PointRegressor for Constant {
        fn predict(&self, _example: &LabeledExample) -> Result<f64> {
            Ok(self.0)
        }
    }

    fn ex(y: f64) -> LabeledExample {
        LabeledExample::new("e", vec![0.0], Some(Target::Real(y)))
    }

    #[test]
    fn unnormalized_residual_is_absolute_error() {
        let scorer = ResidualRegressionScorer::new(Constant(10.0));
        let s = scorer
            .score_candidate(&ex(13.0), &Target::Real(13.0))
            .unwrap();
        assert_relative_eq!(s.value(), 3.0);
        let s = scorer
            .score_candidate(&ex(13.0), &Target::Real(10.0))
            .unwrap();
        assert_eq!(s.value(), 0.0);
    }

    #[test]
    fn sigma_divides_the_residual() {
        // sigma_hat = 2 via a hand-built difficulty field.
        let scorer = ResidualRegressionScorer {
            model: Constant(10.0),
            difficulty: Some(Difficulty {
                k: 1,
                features: vec![vec![0.0]],
                abs_residuals: vec![2.0],
                beta: 0.0,
            }),
        };
        let s = scorer
            .score_candidate(&ex(13.0), &Target::Real(13.0))
            .unwrap();
        assert_relative_eq!(s.value(), 1.5);
    }

    #[test]
    fn score_at_own_prediction_is_zero() {
        let train: Vec<LabeledExample> = (0..30)
            .map(|i| {
                let x = i as f64 * 0.3;
                LabeledExample::new(i.to_string(), vec![x], Some(Target::Real(2.0 * x + 1.0)))
            })
            .collect();
        let scorer = ResidualRegressionScorer::fit_knn(&train, 5, true).unwrap();
        for x in [0.1, 2.3, 7.7] {
            let q = LabeledExample::new("q", vec![x], None);
            let est = scorer.estimate(&q).unwrap();
            assert!(est.sigma_hat > 0.0);
            let s = scorer.score_candidate(&q, &Target::Real(est.y_hat)).unwrap();
            assert_eq!(s.value(), 0.0);
        }
    }

    #[test]
    fn translation_equivariance_without_normalization() {
        let train: Vec<LabeledExample> = (0..20)
            .map(|i| {
                let x = i as f64;
                LabeledExample::new(i.to_string(), vec![x], Some(Target::Real(x.sin() * 3.0)))
            })
            .collect();
        let shifted: Vec<LabeledExample> = train
            .iter()
            .map(|e| {
                let mut s = e.clone();
                s.target = Some(Target::Real(e.real().unwrap() + 100.0));
                s
            })
            .collect();
        let a = ResidualRegressionScorer::fit_knn(&train, 3, false).unwrap();
        let b = ResidualRegressionScorer::fit_knn(&shifted, 3, false).unwrap();
        let q = LabeledExample::new("q", vec![4.2], None);
        for y in [-2.0, 0.0, 5.5] {
            let sa = a.score_candidate(&q, &Target::Real(y)).unwrap().value();
            let sb = b
                .score_candidate(&q, &Target::Real(y + 100.0))
                .unwrap()
                .value();
            assert_relative_eq!(sa, sb, epsilon = 1e-9);
        }
    }

    #[test]
    fn beta_floor_keeps_sigma_positive_on_degenerate_targets() {
        let train: Vec<LabeledExample> = (0..10)
            .map(|i| LabeledExample::new(i.to_string(), vec![i as f64], Some(Target::Real(5.0))))
            .collect();
        let scorer = ResidualRegressionScorer::fit_knn(&train, 3, true).unwrap();
        let est = scorer
            .estimate(&LabeledExample::new("q", vec![3.3], None))
            .unwrap();
        assert!(est.sigma_hat > 0.0);
    }
}
