//! Nearest-neighbor scorers and the built-in k-NN point regressor.

use serde::{Deserialize, Serialize};

use crate::domain::{LabelId, LabelUniverse, LabeledExample, NonconformityScore, Target};
use crate::error::{Error, Result};
use crate::scorers::{check_dimension, euclidean, CandidateScorer, ExampleScorer};

/// Distances to every fitted point, sorted ascending with ties broken by
/// fitted example order.
fn sorted_distances(points: &[Vec<f64>], query: &[f64]) -> Vec<(f64, usize)> {
    let mut dists: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (euclidean(p, query), i))
        .collect();
    dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dists
}

/// Nearest-neighbors nonconformity for classification:
/// sum of distances to the `k` nearest same-class training points divided by
/// the sum of distances to the `k` nearest other-class points. A query that
/// sits among its own class scores low; one surrounded by other classes
/// scores high.
///
/// A zero denominator (the query duplicates `k` other-class points) is
/// floored at `f64::EPSILON * max(1, numerator)`, keeping the score finite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnClassScorer {
    k: usize,
    features: Vec<Vec<f64>>,
    labels: Vec<LabelId>,
    universe: LabelUniverse,
    dim: usize,
}

impl KnnClassScorer {
    /// Fits the scorer. Requires at least two classes and `k` examples in
    /// the smallest class.
    pub fn fit(train: &[LabeledExample], universe: &LabelUniverse, k: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        if k == 0 {
            return Err(Error::EmptyInput("k"));
        }
        let dim = train[0].features.len();
        let mut features = Vec::with_capacity(train.len());
        let mut labels = Vec::with_capacity(train.len());
        let mut counts = vec![0usize; universe.len()];
        for ex in train {
            check_dimension(dim, ex)?;
            let label = ex.class()?;
            counts[label.0] += 1;
            features.push(ex.features.clone());
            labels.push(label);
        }
        let present: Vec<(LabelId, usize)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (LabelId(i), c))
            .collect();
        if present.len() < 2 {
            return Err(Error::SingleClass);
        }
        for (label, count) in present {
            if count < k {
                return Err(Error::ClassTooSmall {
                    label: universe.name(label).to_string(),
                    size: count,
                    needed: k,
                });
            }
        }
        Ok(Self {
            k,
            features,
            labels,
            universe: universe.clone(),
            dim,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn universe(&self) -> &LabelUniverse {
        &self.universe
    }

    pub fn score(&self, example: &LabeledExample, label: LabelId) -> Result<NonconformityScore> {
        check_dimension(self.dim, example)?;
        if label.0 >= self.universe.len() || !self.labels.contains(&label) {
            let name = if label.0 < self.universe.len() {
                self.universe.name(label).to_string()
            } else {
                format!("{label}")
            };
            return Err(Error::UnknownLabel(name));
        }
        let dists = sorted_distances(&self.features, &example.features);
        let mut same_sum = 0.0;
        let mut same_n = 0;
        let mut other_sum = 0.0;
        let mut other_n = 0;
        for &(d, i) in &dists {
            if self.labels[i] == label {
                if same_n < self.k {
                    same_sum += d;
                    same_n += 1;
                }
            } else if other_n < self.k {
                other_sum += d;
                other_n += 1;
            }
            if same_n == self.k && other_n == self.k {
                break;
            }
        }
        let denom = if other_sum > 0.0 {
            other_sum
        } else {
            f64::EPSILON * same_sum.max(1.0)
        };
        NonconformityScore::new(same_sum / denom)
    }
}

impl CandidateScorer for KnnClassScorer {
    fn score_candidate(
        &self,
        example: &LabeledExample,
        target: &Target,
    ) -> Result<NonconformityScore> {
        match target {
            Target::Class(label) => self.score(example, *label),
            Target::Real(_) => Err(Error::TargetKindMismatch {
                id: example.id.clone(),
                expected: "class",
            }),
        }
    }
}

impl ExampleScorer for KnnClassScorer {
    fn score_example(&self, example: &LabeledExample) -> Result<NonconformityScore> {
        self.score(example, example.class()?)
    }
}

/// Built-in point predictor for regression: mean target of the `k` nearest
/// training points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnRegressor {
    k: usize,
    features: Vec<Vec<f64>>,
    targets: Vec<f64>,
    dim: usize,
}

impl KnnRegressor {
    pub const DEFAULT_K: usize = 5;

    pub fn fit(train: &[LabeledExample], k: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        if k == 0 || k > train.len() {
            return Err(Error::ClassTooSmall {
                label: "training set".into(),
                size: train.len(),
                needed: k.max(1),
            });
        }
        let dim = train[0].features.len();
        let mut features = Vec::with_capacity(train.len());
        let mut targets = Vec::with_capacity(train.len());
        for ex in train {
            check_dimension(dim, ex)?;
            targets.push(ex.real()?);
            features.push(ex.features.clone());
        }
        Ok(Self {
            k,
            features,
            targets,
            dim,
        })
    }

    pub fn predict_features(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: features.len(),
                at: None,
            });
        }
        let dists = sorted_distances(&self.features, features);
        let sum: f64 = dists[..self.k].iter().map(|&(_, i)| self.targets[i]).sum();
        Ok(sum / self.k as f64)
    }

    /// Training features and per-point absolute residuals of this model on
    /// its own training data. Used to fit a local difficulty estimate.
    pub(crate) fn training_residuals(&self) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut residuals = Vec::with_capacity(self.targets.len());
        for (x, &y) in self.features.iter().zip(&self.targets) {
            residuals.push((y - self.predict_features(x)?).abs());
        }
        Ok((self.features.clone(), residuals))
    }

    pub(crate) fn training_targets(&self) -> &[f64] {
        &self.targets
    }
}

/// Unsupervised strangeness: sum of distances to the `k` nearest reference
/// points. Targets are ignored, so it works on unlabeled data; used for
/// anomaly detection over the input features themselves and for drift
/// monitoring without outcome labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnDistanceScorer {
    k: usize,
    features: Vec<Vec<f64>>,
    dim: usize,
}

impl KnnDistanceScorer {
    pub const DEFAULT_K: usize = 5;

    pub fn fit(reference: &[LabeledExample], k: usize) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::EmptyInput("reference set"));
        }
        if k == 0 || k > reference.len() {
            return Err(Error::ClassTooSmall {
                label: "reference set".into(),
                size: reference.len(),
                needed: k.max(1),
            });
        }
        let dim = reference[0].features.len();
        for ex in reference {
            check_dimension(dim, ex)?;
        }
        Ok(Self {
            k,
            features: reference.iter().map(|e| e.features.clone()).collect(),
            dim,
        })
    }
}

impl ExampleScorer for KnnDistanceScorer {
    fn score_example(&self, example: &LabeledExample) -> Result<NonconformityScore> {
        check_dimension(self.dim, example)?;
        let dists = sorted_distances(&self.features, &example.features);
        NonconformityScore::new(dists[..self.k].iter().map(|&(d, _)| d).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example(id: &str, features: Vec<f64>, label: Option<LabelId>) -> LabeledExample {
        LabeledExample::new(id, features, label.map(Target::Class))
    }

    fn two_class_universe() -> LabelUniverse {
        LabelUniverse::from_names(["a".into(), "b".into()])
    }

    /// Exhaustive-scan oracle for the k-NN class score, written directly
    /// from the definition and independent of the scorer internals.
    fn oracle_knn_class_score(
        train: &[(Vec<f64>, LabelId)],
        query: &[f64],
        label: LabelId,
        k: usize,
    ) -> f64 {
        let mut same: Vec<f64> = Vec::new();
        let mut other: Vec<f64> = Vec::new();
        for (x, l) in train {
            let d = x
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if *l == label {
                same.push(d);
            } else {
                other.push(d);
            }
        }
        same.sort_by(f64::total_cmp);
        other.sort_by(f64::total_cmp);
        let num: f64 = same[..k].iter().sum();
        let den: f64 = other[..k].iter().sum();
        let den = if den > 0.0 {
            den
        } else {
            f64::EPSILON * num.max(1.0)
        };
        num / den
    }

    #[test]
    fn forced_ratio_with_k1() {
        let universe = two_class_universe();
        // Same-class point at distance 1, other-class at distance 2.
        let train = vec![
            example("t0", vec![1.0], Some(LabelId(0))),
            example("t1", vec![2.0], Some(LabelId(1))),
        ];
        let scorer = KnnClassScorer::fit(&train, &universe, 1).unwrap();
        let q = example("q", vec![0.0], None);
        let s = scorer.score(&q, LabelId(0)).unwrap();
        assert_relative_eq!(s.value(), 0.5);
    }

    #[test]
    fn coincident_same_class_point_scores_zero() {
        let universe = two_class_universe();
        let train = vec![
            example("t0", vec![0.0], Some(LabelId(0))),
            example("t1", vec![1.0], Some(LabelId(1))),
        ];
        let scorer = KnnClassScorer::fit(&train, &universe, 1).unwrap();
        let q = example("q", vec![0.0], None);
        let s = scorer.score(&q, LabelId(0)).unwrap();
        assert_eq!(s.value(), 0.0);
    }

    #[test]
    fn zero_denominator_is_floored() {
        let universe = two_class_universe();
        let train = vec![
            example("t0", vec![5.0], Some(LabelId(0))),
            example("t1", vec![0.0], Some(LabelId(1))),
        ];
        let scorer = KnnClassScorer::fit(&train, &universe, 1).unwrap();
        // Query duplicates the other-class point: denominator would be 0.
        let q = example("q", vec![0.0], None);
        let s = scorer.score(&q, LabelId(0)).unwrap();
        assert!(s.value().is_finite());
        assert!(s.value() > 1e10);
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_points() {
        use rand::Rng;
        let mut rng = crate::rng::seed_rng(42);
        let universe = two_class_universe();
        let train: Vec<LabeledExample> = (0..20)
            .map(|i| {
                let label = LabelId(i % 2);
                let shift = if label.0 == 0 { 0.0 } else { 1.5 };
                example(
                    &format!("t{i}"),
                    vec![rng.random::<f64>() + shift, rng.random::<f64>()],
                    Some(label),
                )
            })
            .collect();
        let oracle_train: Vec<(Vec<f64>, LabelId)> = train
            .iter()
            .map(|e| (e.features.clone(), e.class().unwrap()))
            .collect();
        let scorer = KnnClassScorer::fit(&train, &universe, 3).unwrap();
        for ex in &train {
            for label in [LabelId(0), LabelId(1)] {
                let got = scorer.score(ex, label).unwrap().value();
                let want = oracle_knn_class_score(&oracle_train, &ex.features, label, 3);
                assert_relative_eq!(got, want, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn permutation_invariance_in_training_order() {
        let universe = two_class_universe();
        let train: Vec<LabeledExample> = (0..10)
            .map(|i| {
                example(
                    &format!("t{i}"),
                    vec![i as f64 * 0.7, (i * i % 5) as f64],
                    Some(LabelId(i % 2)),
                )
            })
            .collect();
        let mut reversed = train.clone();
        reversed.reverse();
        let a = KnnClassScorer::fit(&train, &universe, 2).unwrap();
        let b = KnnClassScorer::fit(&reversed, &universe, 2).unwrap();
        let q = example("q", vec![1.3, 2.2], None);
        for label in [LabelId(0), LabelId(1)] {
            assert_eq!(
                a.score(&q, label).unwrap().value(),
                b.score(&q, label).unwrap().value()
            );
        }
    }

    #[test]
    fn fit_rejects_small_classes_and_missing_labels() {
        let universe = two_class_universe();
        let train = vec![
            example("t0", vec![0.0], Some(LabelId(0))),
            example("t1", vec![1.0], Some(LabelId(0))),
            example("t2", vec![2.0], Some(LabelId(1))),
        ];
        assert!(matches!(
            KnnClassScorer::fit(&train, &universe, 2),
            Err(Error::ClassTooSmall { .. })
        ));
        let single = vec![example("t0", vec![0.0], Some(LabelId(0)))];
        assert!(matches!(
            KnnClassScorer::fit(&single, &universe, 1),
            Err(Error::SingleClass)
        ));
        // Scoring a label absent from training errors.
        let scorer = KnnClassScorer::fit(&train, &universe, 1).unwrap();
        let mut bigger = universe.clone();
        let c = bigger.intern("c");
        assert!(matches!(
            scorer.score(&example("q", vec![0.5], None), c),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn knn_regressor_is_local_mean() {
        let train: Vec<LabeledExample> = [(0.0, 1.0), (1.0, 3.0), (10.0, 100.0)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                LabeledExample::new(i.to_string(), vec![x], Some(Target::Real(y)))
            })
            .collect();
        let model = KnnRegressor::fit(&train, 2).unwrap();
        assert_relative_eq!(model.predict_features(&[0.4]).unwrap(), 2.0);
        assert_relative_eq!(model.predict_features(&[9.0]).unwrap(), 51.5);
    }

    #[test]
    fn knn_distance_scorer_ignores_targets_and_sums_k() {
        let reference: Vec<LabeledExample> = (0..5)
            .map(|i| LabeledExample::new(i.to_string(), vec![i as f64], None))
            .collect();
        let scorer = KnnDistanceScorer::fit(&reference, 2).unwrap();
        // Query at 0.5: nearest distances 0.5 (to 0) and 0.5 (to 1).
        let s = scorer
            .score_example(&LabeledExample::new("q", vec![0.5], None))
            .unwrap();
        assert_relative_eq!(s.value(), 1.0);
    }
}
