//! The persisted calibrated-predictor format: versioned JSON, human
//! inspectable and diff-able so calibration decisions can be audited after
//! the fact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use confaudit_core::conditional::{IfacmState, MondrianPredictor};
use confaudit_core::domain::{LabelUniverse, LabeledExample, NonconformityScore, Target};
use confaudit_core::error::Result as CoreResult;
use confaudit_core::icp::CalibrationSet;
use confaudit_core::scorers::{
    CandidateScorer, ExampleScorer, ExternalClassScorer, ExternalRegressionScorer,
    KnnClassScorer, KnnRegressor, RegressionEstimate, RegressionScorer,
    ResidualRegressionScorer,
};

use crate::config::Method;
use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskDescriptor {
    Classification,
    Regression,
}

/// A fitted scorer in its serialized form. Built-in scorers embed their
/// fitted state; external scorers embed the score table plus the path it
/// came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FittedScorer {
    KnnClass(KnnClassScorer),
    ResidualKnn(ResidualRegressionScorer<KnnRegressor>),
    ExternalClass {
        path: PathBuf,
        table: ExternalClassScorer,
    },
    ExternalRegression {
        path: PathBuf,
        table: ExternalRegressionScorer,
    },
}

impl FittedScorer {
    pub fn task(&self) -> TaskDescriptor {
        match self {
            FittedScorer::KnnClass(_) | FittedScorer::ExternalClass { .. } => {
                TaskDescriptor::Classification
            }
            FittedScorer::ResidualKnn(_) | FittedScorer::ExternalRegression { .. } => {
                TaskDescriptor::Regression
            }
        }
    }
}

impl CandidateScorer for FittedScorer {
    fn score_candidate(
        &self,
        example: &LabeledExample,
        target: &Target,
    ) -> CoreResult<NonconformityScore> {
        match self {
            FittedScorer::KnnClass(s) => s.score_candidate(example, target),
            FittedScorer::ResidualKnn(s) => s.score_candidate(example, target),
            FittedScorer::ExternalClass { table, .. } => table.score_candidate(example, target),
            FittedScorer::ExternalRegression { table, .. } => {
                table.score_candidate(example, target)
            }
        }
    }
}

impl ExampleScorer for FittedScorer {
    fn score_example(&self, example: &LabeledExample) -> CoreResult<NonconformityScore> {
        match self {
            FittedScorer::KnnClass(s) => s.score_example(example),
            FittedScorer::ResidualKnn(s) => s.score_example(example),
            FittedScorer::ExternalClass { table, .. } => table.score_example(example),
            FittedScorer::ExternalRegression { table, .. } => table.score_example(example),
        }
    }
}

impl RegressionScorer for FittedScorer {
    fn estimate(&self, example: &LabeledExample) -> CoreResult<RegressionEstimate> {
        match self {
            FittedScorer::ResidualKnn(s) => s.estimate(example),
            FittedScorer::ExternalRegression { table, .. } => table.estimate(example),
            _ => Err(confaudit_core::Error::Unsupported(
                "classification scorer cannot produce a regression estimate".into(),
            )),
        }
    }
}

/// Versioned on-disk predictor: everything needed to reproduce predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorFile {
    pub format_version: u32,
    pub method: Method,
    pub task: TaskDescriptor,
    pub feature_names: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_universe: Option<LabelUniverse>,
    pub confidence_levels: Vec<f64>,
    pub seed: u64,
    pub scorer: FittedScorer,
    /// Plain ICP calibration (method `icp`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mondrian: Option<MondrianPredictor>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ifacm: Option<IfacmState>,
}

impl PredictorFile {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Runtime(format!("serializing predictor: {e}")))?;
        std::fs::write(path, json + "\n")
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("predictor {}: cannot read: {e}", path.display()))
        })?;
        let file: PredictorFile = serde_json::from_str(&text).map_err(|e| {
            CliError::Validation(format!("predictor {}: {e}", path.display()))
        })?;
        if file.format_version != FORMAT_VERSION {
            return Err(CliError::Validation(format!(
                "predictor {}: format_version {} is not supported (expected {FORMAT_VERSION})",
                path.display(),
                file.format_version
            )));
        }
        Ok(file)
    }
}
