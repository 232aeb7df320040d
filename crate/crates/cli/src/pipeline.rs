//! Shared command plumbing: datasets, splits, scorers, predictors.

use confaudit_core::conditional::{ifacm_fit, MondrianPredictor, Taxonomy, TaxonomySpec};
use confaudit_core::data::{self, Dataset, Splits, TaskKind};
use confaudit_core::domain::{ConfidenceLevel, LabeledExample, NonconformityScore, Prediction};
use confaudit_core::error::Result as CoreResult;
use confaudit_core::icp;
use confaudit_core::scorers::{
    ExampleScorer, ExternalClassScorer, ExternalRegressionScorer, KnnClassScorer,
    KnnDistanceScorer, ResidualRegressionScorer,
};

use crate::config::{Method, ResolvedConfig, ScorerConfig};
use crate::predictor::{FittedScorer, PredictorFile, TaskDescriptor, FORMAT_VERSION};
use crate::CliError;

/// Seed salts, so each randomized stage draws from its own stream.
pub const SALT_SMOOTHING: u64 = 0x9e37_79b9_7f4a_7c15;
pub const SALT_ANOMALY: u64 = 0x5851_f42d_4c95_7f2d;

pub fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Loads or generates the dataset named by the config.
pub fn load_dataset(resolved: &ResolvedConfig) -> Result<Dataset, CliError> {
    let source = &resolved.config.dataset;
    if let Some(path) = &source.path {
        data::load(path).map_err(runtime)
    } else if let Some(spec) = &source.synthetic {
        let spec = spec.clone();
        data::generate(&spec).map_err(runtime)
    } else {
        unreachable!("validated in ResolvedConfig::load")
    }
}

pub fn split_dataset(resolved: &ResolvedConfig, dataset: &Dataset) -> Result<Splits, CliError> {
    data::split(dataset, &resolved.config.split.to_split_config(resolved.seed))
        .map_err(runtime)
}

/// Fits the configured scorer for calibrate/predict/audit. The unsupervised
/// distance scorer has no candidate-target notion and is rejected here.
pub fn fit_supervised_scorer(
    resolved: &ResolvedConfig,
    dataset: &Dataset,
    train: &[LabeledExample],
) -> Result<FittedScorer, CliError> {
    match &resolved.config.scorer {
        ScorerConfig::KnnClass { k } => {
            let universe = dataset.universe().ok_or_else(|| {
                runtime("scorer knn-class needs a classification dataset (a `label` column)")
            })?;
            Ok(FittedScorer::KnnClass(
                KnnClassScorer::fit(train, universe, *k).map_err(runtime)?,
            ))
        }
        ScorerConfig::ResidualKnn { k, normalize } => {
            if dataset.task != TaskKind::Regression {
                return Err(runtime(
                    "scorer residual-knn needs a regression dataset (a `target` column)",
                ));
            }
            Ok(FittedScorer::ResidualKnn(
                ResidualRegressionScorer::fit_knn(train, *k, *normalize).map_err(runtime)?,
            ))
        }
        ScorerConfig::ExternalClass { path } => {
            let universe = dataset.universe().ok_or_else(|| {
                runtime("scorer external-class needs a classification dataset")
            })?;
            Ok(FittedScorer::ExternalClass {
                path: path.clone(),
                table: ExternalClassScorer::from_csv_path(path, universe).map_err(runtime)?,
            })
        }
        ScorerConfig::ExternalRegression { path } => {
            if dataset.task != TaskKind::Regression {
                return Err(runtime(
                    "scorer external-regression needs a regression dataset",
                ));
            }
            Ok(FittedScorer::ExternalRegression {
                path: path.clone(),
                table: ExternalRegressionScorer::from_csv_path(path).map_err(runtime)?,
            })
        }
        ScorerConfig::KnnDistance { .. } => Err(CliError::Validation(format!(
            "config {}: scorer.kind: knn-distance is unsupervised; use it with the drift and anomaly commands",
            resolved.config_path.display()
        ))),
    }
}

/// Scorer for the drift monitor and anomaly detector: any configured kind.
pub enum StreamScorer {
    Distance(KnnDistanceScorer),
    Fitted(FittedScorer),
}

impl ExampleScorer for StreamScorer {
    fn score_example(&self, example: &LabeledExample) -> CoreResult<NonconformityScore> {
        match self {
            StreamScorer::Distance(s) => s.score_example(example),
            StreamScorer::Fitted(s) => s.score_example(example),
        }
    }
}

pub fn fit_stream_scorer(
    resolved: &ResolvedConfig,
    dataset: &Dataset,
    train: &[LabeledExample],
) -> Result<StreamScorer, CliError> {
    match &resolved.config.scorer {
        ScorerConfig::KnnDistance { k } => Ok(StreamScorer::Distance(
            KnnDistanceScorer::fit(train, *k).map_err(runtime)?,
        )),
        _ => Ok(StreamScorer::Fitted(fit_supervised_scorer(
            resolved, dataset, train,
        )?)),
    }
}

pub fn load_taxonomy(
    resolved: &ResolvedConfig,
    dataset: &Dataset,
) -> Result<Taxonomy, CliError> {
    let path = resolved
        .config
        .taxonomy_path
        .as_ref()
        .expect("validated in ResolvedConfig::load");
    let spec = TaxonomySpec::from_json_path(path).map_err(|e| {
        CliError::Validation(format!("taxonomy {}: {e}", path.display()))
    })?;
    Taxonomy::compile(&spec, &dataset.feature_names, dataset.universe())
        .map_err(|e| CliError::Validation(format!("taxonomy {}: {e}", path.display())))
}

/// Calibrates one method into a persistable predictor.
pub fn build_predictor(
    resolved: &ResolvedConfig,
    method: Method,
    dataset: &Dataset,
    splits: &Splits,
    scorer: FittedScorer,
) -> Result<PredictorFile, CliError> {
    let mut file = PredictorFile {
        format_version: FORMAT_VERSION,
        method,
        task: scorer.task(),
        feature_names: dataset.feature_names.clone(),
        label_universe: dataset.universe().cloned(),
        confidence_levels: resolved.config.confidence_levels.clone(),
        seed: resolved.seed,
        scorer,
        calibration: None,
        mondrian: None,
        ifacm: None,
    };
    match method {
        Method::Icp => {
            file.calibration = Some(
                icp::calibrate(&file.scorer, &splits.calibration.examples).map_err(runtime)?,
            );
        }
        Method::Mondrian => {
            let taxonomy = load_taxonomy(resolved, dataset)?;
            file.mondrian = Some(
                MondrianPredictor::fit(
                    &file.scorer,
                    taxonomy,
                    &splits.calibration.examples,
                    resolved.config.mondrian.min_category_size,
                )
                .map_err(runtime)?,
            );
        }
        Method::Ifacm => {
            let taxonomy = load_taxonomy(resolved, dataset)?;
            let state = ifacm_fit(
                &file.scorer,
                taxonomy,
                &splits.calibration.examples,
                &splits.tuning.examples,
                resolved.levels[0],
                &resolved.config.ifacm,
            )
            .map_err(runtime)?;
            for w in state.warnings() {
                log::warn!("ifacm: {w}");
            }
            file.ifacm = Some(state);
        }
    }
    Ok(file)
}

/// One prediction through a calibrated predictor, dispatched on method and
/// task. Classification uses deterministic p-values (the user-facing
/// default).
pub fn predict_one(
    file: &PredictorFile,
    example: &LabeledExample,
    level: ConfidenceLevel,
) -> CoreResult<Prediction> {
    match file.task {
        TaskDescriptor::Classification => {
            let universe = file.label_universe.as_ref().ok_or_else(|| {
                confaudit_core::Error::Unsupported(
                    "classification predictor lacks a label universe".into(),
                )
            })?;
            let set = match file.method {
                Method::Icp => icp::predict_set(
                    file.calibration.as_ref().expect("icp predictor"),
                    &file.scorer,
                    example,
                    universe,
                    level,
                )?,
                Method::Mondrian => file
                    .mondrian
                    .as_ref()
                    .expect("mondrian predictor")
                    .predict_set(&file.scorer, example, universe, level)?,
                Method::Ifacm => file
                    .ifacm
                    .as_ref()
                    .expect("ifacm predictor")
                    .predict_set(&file.scorer, example, universe, level)?,
            };
            Ok(Prediction::Set(set))
        }
        TaskDescriptor::Regression => {
            let interval = match file.method {
                Method::Icp => icp::predict_interval(
                    file.calibration.as_ref().expect("icp predictor"),
                    &file.scorer,
                    example,
                    level,
                )?,
                Method::Mondrian => file
                    .mondrian
                    .as_ref()
                    .expect("mondrian predictor")
                    .predict_interval(&file.scorer, example, level)?,
                Method::Ifacm => file
                    .ifacm
                    .as_ref()
                    .expect("ifacm predictor")
                    .predict_interval(&file.scorer, example, level)?,
            };
            Ok(Prediction::Interval(interval))
        }
    }
}

/// Input features must line up with what the predictor was calibrated on.
pub fn check_features(file: &PredictorFile, dataset: &Dataset) -> Result<(), CliError> {
    if file.feature_names != dataset.feature_names {
        return Err(CliError::Runtime(format!(
            "input feature columns {:?} do not match the predictor's {:?}",
            dataset.feature_names, file.feature_names
        )));
    }
    Ok(())
}
