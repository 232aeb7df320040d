//! Run configuration: a JSON file validated in full before any computation.
//! Unknown keys are rejected everywhere.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use confaudit_core::conditional::IfacmConfig;
use confaudit_core::data::SyntheticSpec;
use confaudit_core::domain::ConfidenceLevel;
use confaudit_core::icp::SplitConfig;
use confaudit_core::monitor::BettingConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Icp,
    Mondrian,
    Ifacm,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Icp => write!(f, "icp"),
            Method::Mondrian => write!(f, "mondrian"),
            Method::Ifacm => write!(f, "ifacm"),
        }
    }
}

/// `"icp"` or `["icp", "mondrian", "ifacm"]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MethodSpec {
    Single(Method),
    Many(Vec<Method>),
}

impl MethodSpec {
    pub fn methods(&self) -> Vec<Method> {
        match self {
            MethodSpec::Single(m) => vec![*m],
            MethodSpec::Many(ms) => ms.clone(),
        }
    }
}

impl Default for MethodSpec {
    fn default() -> Self {
        MethodSpec::Single(Method::Icp)
    }
}

/// Exactly one of `path` or `synthetic`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScorerConfig {
    /// Nearest-neighbors classification nonconformity.
    KnnClass {
        #[serde(default = "default_knn_k")]
        k: usize,
    },
    /// Residual score around the built-in k-NN regressor.
    ResidualKnn {
        #[serde(default = "default_knn_k")]
        k: usize,
        #[serde(default)]
        normalize: bool,
    },
    /// Externally computed per-label scores (CSV `example_id,label,score`).
    ExternalClass { path: PathBuf },
    /// Externally computed predictions (CSV `example_id,y_hat[,sigma_hat]`).
    ExternalRegression { path: PathBuf },
    /// Unsupervised: sum of k nearest distances to the training data.
    KnnDistance {
        #[serde(default = "default_knn_k")]
        k: usize,
    },
}

fn default_knn_k() -> usize {
    5
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub calibration: f64,
    #[serde(default)]
    pub tuning: Option<f64>,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.5,
            calibration: 0.25,
            tuning: None,
        }
    }
}

impl SplitFractions {
    pub fn to_split_config(self, seed: u64) -> SplitConfig {
        SplitConfig {
            train_fraction: self.train,
            calibration_fraction: self.calibration,
            tuning_fraction: self.tuning,
            seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MondrianParams {
    pub min_category_size: usize,
}

impl Default for MondrianParams {
    fn default() -> Self {
        Self {
            min_category_size: confaudit_core::conditional::DEFAULT_MIN_CATEGORY_SIZE,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BettingSpec {
    Named(String),
    Power { power: f64 },
}

impl Default for BettingSpec {
    fn default() -> Self {
        BettingSpec::Named("mixture".into())
    }
}

impl BettingSpec {
    pub fn to_betting_config(&self) -> Result<BettingConfig, CliError> {
        match self {
            BettingSpec::Named(name) if name == "mixture" => Ok(BettingConfig::GridMixture),
            BettingSpec::Named(name) => Err(CliError::Validation(format!(
                "monitor.betting: unknown strategy {name:?} (expected \"mixture\" or {{\"power\": e}})"
            ))),
            BettingSpec::Power { power } => Ok(BettingConfig::Power { epsilon: *power }),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorParams {
    pub betting: BettingSpec,
    pub false_alarm_prob: f64,
}

impl Default for MonitorParams {
    fn default() -> Self {
        Self {
            betting: BettingSpec::default(),
            false_alarm_prob: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnomalyParams {
    pub epsilon: f64,
}

impl Default for AnomalyParams {
    fn default() -> Self {
        Self { epsilon: 0.05 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub scorer: ScorerConfig,
    #[serde(default)]
    pub method: MethodSpec,
    pub confidence_levels: Vec<f64>,
    #[serde(default)]
    pub taxonomy_path: Option<PathBuf>,
    #[serde(default)]
    pub split: SplitFractions,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Where `predict` finds the calibrated predictor; defaults to
    /// `<output_dir>/predictor.json`.
    #[serde(default)]
    pub predictor_path: Option<PathBuf>,
    #[serde(default)]
    pub mondrian: MondrianParams,
    #[serde(default)]
    pub ifacm: IfacmConfig,
    #[serde(default)]
    pub monitor: MonitorParams,
    #[serde(default)]
    pub anomaly: AnomalyParams,
}

/// A validated configuration plus the CLI overrides applied to it.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: RunConfig,
    pub config_path: PathBuf,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub levels: Vec<ConfidenceLevel>,
}

impl ResolvedConfig {
    pub fn load(
        config_path: &Path,
        seed_override: Option<u64>,
        out_override: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        let at = |msg: String| CliError::Validation(format!("config {}: {msg}", config_path.display()));
        let text = std::fs::read_to_string(config_path)
            .map_err(|e| at(format!("cannot read: {e}")))?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| at(format!("{e}")))?;

        if config.dataset.path.is_some() == config.dataset.synthetic.is_some() {
            return Err(at(
                "dataset: exactly one of `path` or `synthetic` must be set".into(),
            ));
        }
        if let Some(p) = &config.dataset.path {
            if !p.exists() {
                return Err(at(format!("dataset.path: file {} does not exist", p.display())));
            }
        }
        match &config.scorer {
            ScorerConfig::ExternalClass { path } | ScorerConfig::ExternalRegression { path } => {
                if !path.exists() {
                    return Err(at(format!(
                        "scorer.path: file {} does not exist",
                        path.display()
                    )));
                }
            }
            ScorerConfig::KnnClass { k }
            | ScorerConfig::ResidualKnn { k, .. }
            | ScorerConfig::KnnDistance { k } => {
                if *k == 0 {
                    return Err(at("scorer.k: must be positive".into()));
                }
            }
        }

        if config.confidence_levels.is_empty() {
            return Err(at("confidence_levels: must not be empty".into()));
        }
        let levels = config
            .confidence_levels
            .iter()
            .map(|&l| {
                ConfidenceLevel::new(l)
                    .map_err(|_| at(format!("confidence_levels: {l} is not inside (0, 1)")))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let seed = seed_override.unwrap_or(config.seed);
        config
            .split
            .to_split_config(seed)
            .validate()
            .map_err(|e| at(format!("split: {e}")))?;

        let methods = config.method.methods();
        if methods.is_empty() {
            return Err(at("method: must name at least one method".into()));
        }
        let needs_taxonomy = methods
            .iter()
            .any(|m| matches!(m, Method::Mondrian | Method::Ifacm));
        if needs_taxonomy {
            match &config.taxonomy_path {
                None => {
                    return Err(at(
                        "taxonomy_path: required for the mondrian and ifacm methods".into(),
                    ))
                }
                Some(p) if !p.exists() => {
                    return Err(at(format!(
                        "taxonomy_path: file {} does not exist",
                        p.display()
                    )))
                }
                _ => {}
            }
        }
        if methods.contains(&Method::Ifacm) && config.split.tuning.is_none() {
            return Err(at("split.tuning: the ifacm method needs a tuning split".into()));
        }
        if !(config.monitor.false_alarm_prob > 0.0 && config.monitor.false_alarm_prob < 1.0) {
            return Err(at(format!(
                "monitor.false_alarm_prob: {} is not inside (0, 1)",
                config.monitor.false_alarm_prob
            )));
        }
        if !(config.anomaly.epsilon > 0.0 && config.anomaly.epsilon < 1.0) {
            return Err(at(format!(
                "anomaly.epsilon: {} is not inside (0, 1)",
                config.anomaly.epsilon
            )));
        }
        config.monitor.betting.to_betting_config()?;

        let output_dir = out_override
            .or_else(|| config.output_dir.clone())
            .ok_or_else(|| at("output_dir: not set (use --out or the config field)".into()))?;

        Ok(Self {
            config,
            config_path: config_path.to_path_buf(),
            seed,
            output_dir,
            levels,
        })
    }

    pub fn methods(&self) -> Vec<Method> {
        self.config.method.methods()
    }

    pub fn single_method(&self) -> Result<Method, CliError> {
        let methods = self.methods();
        if methods.len() == 1 {
            Ok(methods[0])
        } else {
            Err(CliError::Validation(format!(
                "config {}: method: this command needs exactly one method, got {:?}",
                self.config_path.display(),
                methods.iter().map(|m| m.to_string()).collect::<Vec<_>>()
            )))
        }
    }

    pub fn predictor_path(&self) -> PathBuf {
        self.config
            .predictor_path
            .clone()
            .unwrap_or_else(|| self.output_dir.join("predictor.json"))
    }
}
