//! Adapters for externally computed scores and predictions, so models
//! trained elsewhere (deep networks included) can feed the toolkit.
//!
//! CSV formats (UTF-8, header row mandatory):
//!
//! - classification scores: `example_id,label,score`
//! - regression predictions: `example_id,y_hat[,sigma_hat]`

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{LabelUniverse, LabeledExample, NonconformityScore, Target};
use crate::error::{Error, Result};
use crate::scorers::{
    CandidateScorer, ExampleScorer, RegressionEstimate, RegressionScorer,
};

/// Per-example, per-label nonconformity scores computed outside the toolkit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalClassScorer {
    /// example id -> label name -> score.
    scores: BTreeMap<String, BTreeMap<String, f64>>,
    universe: LabelUniverse,
}

impl ExternalClassScorer {
    pub fn from_csv_path(path: impl AsRef<Path>, universe: &LabelUniverse) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path.as_ref())?, universe)
    }

    pub fn from_reader<R: Read>(reader: R, universe: &LabelUniverse) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = csv.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (id_c, label_c, score_c) = (col("example_id")?, col("label")?, col("score")?);

        let mut scores: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (row_idx, record) in csv.records().enumerate() {
            let row = row_idx + 1;
            let record = record?;
            let id = record.get(id_c).unwrap_or_default().to_string();
            let label = record.get(label_c).unwrap_or_default().to_string();
            let raw = record.get(score_c).unwrap_or_default();
            let score: f64 = raw.parse().map_err(|_| Error::MalformedRow {
                row,
                message: format!("cannot parse score {raw:?}"),
            })?;
            if !score.is_finite() {
                return Err(Error::MalformedRow {
                    row,
                    message: format!("non-finite score {raw:?}"),
                });
            }
            scores.entry(id).or_default().insert(label, score);
        }
        Ok(Self {
            scores,
            universe: universe.clone(),
        })
    }

    /// Returns the stored score unchanged.
    pub fn get(&self, id: &str, label: &str) -> Result<f64> {
        self.scores
            .get(id)
            .and_then(|m| m.get(label))
            .copied()
            .ok_or_else(|| Error::MissingScore {
                id: id.to_string(),
                label: label.to_string(),
            })
    }

    /// Checks that every (example, label) pair is present.
    pub fn validate_complete<'a>(
        &self,
        ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<()> {
        for id in ids {
            for label in self.universe.ids() {
                self.get(id, self.universe.name(label))?;
            }
        }
        Ok(())
    }
}

impl CandidateScorer for ExternalClassScorer {
    fn score_candidate(
        &self,
        example: &LabeledExample,
        target: &Target,
    ) -> Result<NonconformityScore> {
        let label = target.as_class().ok_or_else(|| Error::TargetKindMismatch {
            id: example.id.clone(),
            expected: "class",
        })?;
        if label.0 >= self.universe.len() {
            return Err(Error::UnknownLabel(format!("{label}")));
        }
        NonconformityScore::new(self.get(&example.id, self.universe.name(label))?)
    }
}

impl ExampleScorer for ExternalClassScorer {
    fn score_example(&self, example: &LabeledExample) -> Result<NonconformityScore> {
        self.score_candidate(example, &Target::Class(example.class()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ExternalPrediction {
    y_hat: f64,
    sigma_hat: Option<f64>,
}

/// Externally computed point predictions (and optional difficulty
/// estimates); scores are residuals computed on lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRegressionScorer {
    predictions: BTreeMap<String, ExternalPrediction>,
}

impl ExternalRegressionScorer {
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path.as_ref())?)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = csv.headers()?.clone();
        let col = |name: &str| -> Option<usize> { headers.iter().position(|h| h == name) };
        let id_c = col("example_id").ok_or_else(|| Error::MissingColumn("example_id".into()))?;
        let yhat_c = col("y_hat").ok_or_else(|| Error::MissingColumn("y_hat".into()))?;
        let sigma_c = col("sigma_hat");

        let mut predictions = BTreeMap::new();
        for (row_idx, record) in csv.records().enumerate() {
            let row = row_idx + 1;
            let record = record?;
            let id = record.get(id_c).unwrap_or_default().to_string();
            let raw = record.get(yhat_c).unwrap_or_default();
            let y_hat: f64 = raw.parse().map_err(|_| Error::MalformedRow {
                row,
                message: format!("cannot parse y_hat {raw:?}"),
            })?;
            let sigma_hat = match sigma_c {
                Some(c) => {
                    let raw = record.get(c).unwrap_or_default();
                    if raw.is_empty() {
                        None
                    } else {
                        let v: f64 = raw.parse().map_err(|_| Error::MalformedRow {
                            row,
                            message: format!("cannot parse sigma_hat {raw:?}"),
                        })?;
                        if !v.is_finite() || v <= 0.0 {
                            return Err(Error::NonPositiveSigma {
                                id: id.clone(),
                                got: v,
                            });
                        }
                        Some(v)
                    }
                }
                None => None,
            };
            if predictions
                .insert(id.clone(), ExternalPrediction { y_hat, sigma_hat })
                .is_some()
            {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self { predictions })
    }

    fn lookup(&self, id: &str) -> Result<ExternalPrediction> {
        self.predictions
            .get(id)
            .copied()
            .ok_or_else(|| Error::MissingPrediction { id: id.to_string() })
    }
}

impl CandidateScorer for ExternalRegressionScorer {
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

impl RegressionScorer for ExternalRegressionScorer {
    fn estimate(&self, example: &LabeledExample) -> Result<RegressionEstimate> {
        let p = self.lookup(&example.id)?;
        Ok(RegressionEstimate {
            y_hat: p.y_hat,
            sigma_hat: p.sigma_hat.unwrap_or(1.0),
        })
    }
}

impl ExampleScorer for ExternalRegressionScorer {
    fn score_example(&self, example: &LabeledExample) -> Result<NonconformityScore> {
        let y = example.real()?;
        self.score_candidate(example, &Target::Real(y))
    }
}
