//! The five subcommands. Every artifact they write is a pure function of
//! the config and seed, so a repeated run is byte-identical.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use confaudit_core::anomaly;
use confaudit_core::audit::{self, VariantPredictor};
use confaudit_core::data;
use confaudit_core::domain::{ConfidenceLevel, Prediction, PredictionNotes};
use confaudit_core::monitor::{alarm_threshold_for, observe, MartingaleState, OnlineConformalSource};
use confaudit_core::rng::seed_rng;

use crate::config::ResolvedConfig;
use crate::pipeline::{
    build_predictor, check_features, fit_stream_scorer, fit_supervised_scorer, load_dataset,
    load_taxonomy, predict_one, runtime, split_dataset, SALT_ANOMALY, SALT_SMOOTHING,
};
use crate::predictor::PredictorFile;
use crate::CliError;

fn ensure_out_dir(resolved: &ResolvedConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&resolved.output_dir)
        .map_err(|e| CliError::Runtime(format!("creating output directory: {e}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, json + "\n")
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn open_jsonl(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path).map_err(
        |e| CliError::Runtime(format!("creating {}: {e}", path.display())),
    )?))
}

pub fn cmd_calibrate(resolved: &ResolvedConfig) -> Result<(), CliError> {
    let method = resolved.single_method()?;
    ensure_out_dir(resolved)?;
    let dataset = load_dataset(resolved)?;
    let splits = split_dataset(resolved, &dataset)?;
    let scorer = fit_supervised_scorer(resolved, &dataset, &splits.train.examples)?;
    let file = build_predictor(resolved, method, &dataset, &splits, scorer)?;
    let path = resolved.predictor_path();
    file.save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// One output line of `predict`.
#[derive(Serialize)]
struct PredictionRecord {
    example_id: String,
    level: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    set: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_values: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    interval: Option<IntervalRecord>,
    notes: PredictionNotes,
}

#[derive(Serialize)]
struct IntervalRecord {
    lo: f64,
    hi: f64,
    unbounded: bool,
}

fn to_record(file: &PredictorFile, id: &str, level: f64, pred: &Prediction) -> PredictionRecord {
    match pred {
        Prediction::Set(s) => {
            let universe = file.label_universe.as_ref().expect("classification");
            PredictionRecord {
                example_id: id.to_string(),
                level,
                set: Some(s.labels().map(|l| universe.name(l).to_string()).collect()),
                p_values: Some(
                    universe
                        .ids()
                        .map(|l| (universe.name(l).to_string(), s.p_values[l.0]))
                        .collect(),
                ),
                interval: None,
                notes: s.notes,
            }
        }
        Prediction::Interval(iv) => PredictionRecord {
            example_id: id.to_string(),
            level,
            set: None,
            p_values: None,
            interval: Some(IntervalRecord {
                lo: iv.lo,
                hi: iv.hi,
                unbounded: iv.unbounded,
            }),
            notes: iv.notes,
        },
    }
}

pub fn cmd_predict(
    resolved: &ResolvedConfig,
    input: &Path,
    level_override: Option<f64>,
) -> Result<(), CliError> {
    let file = PredictorFile::load(&resolved.predictor_path())?;
    let level = match level_override {
        Some(l) => ConfidenceLevel::new(l)
            .map_err(|_| CliError::Validation(format!("--level {l} is not inside (0, 1)")))?,
        None => ConfidenceLevel::new(file.confidence_levels[0]).map_err(runtime)?,
    };
    ensure_out_dir(resolved)?;
    let batch = data::load(input).map_err(runtime)?;
    check_features(&file, &batch)?;

    let mut records = Vec::with_capacity(batch.len());
    let mut stdout = std::io::stdout().lock();
    for ex in &batch.examples {
        let pred = predict_one(&file, ex, level).map_err(runtime)?;
        let record = to_record(&file, &ex.id, level.level(), &pred);
        let line = serde_json::to_string(&record).map_err(runtime)?;
        writeln!(stdout, "{line}").map_err(runtime)?;
        records.push(record);
    }
    write_json(&resolved.output_dir.join("predictions.json"), &records)?;
    Ok(())
}

#[derive(Serialize)]
struct AuditBundle<'a> {
    method: String,
    seed: u64,
    levels: &'a [f64],
    report: audit::AuditReport,
}

/// One audited method. Feedback adjustments are tuned at a single
/// confidence level, so the ifacm variant carries one fitted state per
/// audited level; the other methods are level-free and carry one.
struct AuditVariant {
    name: String,
    by_level: Vec<(f64, PredictorFile)>,
}

impl AuditVariant {
    fn file_for(&self, level: f64) -> &PredictorFile {
        self.by_level
            .iter()
            .find(|(l, _)| *l == level)
            .map(|(_, f)| f)
            .unwrap_or(&self.by_level[0].1)
    }
}

pub fn cmd_audit(resolved: &ResolvedConfig) -> Result<(), CliError> {
    ensure_out_dir(resolved)?;
    let dataset = load_dataset(resolved)?;
    let splits = split_dataset(resolved, &dataset)?;
    if splits.test.is_empty() {
        return Err(CliError::Validation(format!(
            "config {}: split: audit needs a nonempty test remainder",
            resolved.config_path.display()
        )));
    }

    let mut variants = Vec::new();
    for method in resolved.methods() {
        let mut by_level = Vec::new();
        let fit_levels: &[ConfidenceLevel] = match method {
            crate::config::Method::Ifacm => &resolved.levels,
            _ => &resolved.levels[..1],
        };
        for &level in fit_levels {
            let scorer = fit_supervised_scorer(resolved, &dataset, &splits.train.examples)?;
            let mut sub = resolved.clone();
            sub.levels = vec![level];
            by_level.push((
                level.level(),
                build_predictor(&sub, method, &dataset, &splits, scorer)?,
            ));
        }
        variants.push(AuditVariant {
            name: method.to_string(),
            by_level,
        });
    }

    for variant in &variants {
        let report = audit::audit_report(
            |ex, level| predict_one(variant.file_for(level.level()), ex, level),
            &splits.test.examples,
            resolved.levels[0],
            &resolved.levels,
        )
        .map_err(runtime)?;
        let method = &variant.name;
        let mut curve_csv = Vec::new();
        report.calibration_curve.write_csv(&mut curve_csv).map_err(runtime)?;
        std::fs::write(
            resolved.output_dir.join(format!("calibration_curve_{method}.csv")),
            curve_csv,
        )
        .map_err(runtime)?;
        write_json(
            &resolved.output_dir.join(format!("report_{method}.json")),
            &AuditBundle {
                method: method.clone(),
                seed: resolved.seed,
                levels: &resolved.config.confidence_levels,
                report,
            },
        )?;
        println!("audited {method}");
    }

    if resolved.config.taxonomy_path.is_some() {
        let taxonomy = load_taxonomy(resolved, &dataset)?;
        let predictors: Vec<(String, VariantPredictor)> = variants
            .iter()
            .map(|variant| {
                let predict: VariantPredictor = Box::new(move |ex, level| {
                    predict_one(variant.file_for(level.level()), ex, level)
                });
                (variant.name.clone(), predict)
            })
            .collect();
        let report = audit::subgroup_bias_report(
            predictors,
            &splits.test.examples,
            &taxonomy,
            &resolved.levels,
        )
        .map_err(runtime)?;
        let mut csv = Vec::new();
        report.write_csv(&mut csv).map_err(runtime)?;
        std::fs::write(resolved.output_dir.join("subgroup_table.csv"), csv).map_err(runtime)?;
        write_json(&resolved.output_dir.join("subgroup_report.json"), &report)?;
        println!("wrote subgroup table");
    }
    Ok(())
}

pub fn cmd_drift(resolved: &ResolvedConfig, stream_path: &Path) -> Result<(), CliError> {
    ensure_out_dir(resolved)?;
    // The whole configured dataset is the pre-stream training data; the
    // monitor ranks stream items only against their own past.
    let training = load_dataset(resolved)?;
    let scorer = fit_stream_scorer(resolved, &training, &training.examples)?;
    let stream = data::load(stream_path).map_err(runtime)?;
    if stream.feature_names != training.feature_names {
        return Err(CliError::Runtime(format!(
            "stream feature columns {:?} do not match the training data's {:?}",
            stream.feature_names, training.feature_names
        )));
    }

    let mut source = OnlineConformalSource::new(scorer, resolved.seed ^ SALT_SMOOTHING);
    let mut state = MartingaleState::new(
        resolved.config.monitor.betting.to_betting_config()?,
        alarm_threshold_for(resolved.config.monitor.false_alarm_prob).map_err(runtime)?,
    )
    .map_err(runtime)?;

    let jsonl_path = resolved.output_dir.join("drift.jsonl");
    let mut jsonl = open_jsonl(&jsonl_path)?;
    let mut stdout = std::io::stdout().lock();
    for ex in &stream.examples {
        let step = observe(&mut source, &mut state, ex).map_err(runtime)?;
        let line = serde_json::to_string(&step).map_err(runtime)?;
        writeln!(stdout, "{line}").map_err(runtime)?;
        writeln!(jsonl, "{line}").map_err(runtime)?;
    }
    jsonl.flush().map_err(runtime)?;
    match state.first_alarm_index() {
        Some(i) => log::warn!("drift alarm first raised at step {i}"),
        None => log::info!("no drift alarm over {} steps", state.n()),
    }
    Ok(())
}

#[derive(Serialize)]
struct VerdictRecord {
    example_id: String,
    p_value: f64,
    threshold: f64,
    is_anomaly: bool,
    score: f64,
}

#[derive(Serialize)]
struct AnomalySummary {
    n: usize,
    alarm_count: usize,
    alarm_rate: Option<f64>,
    epsilon: f64,
}

pub fn cmd_anomaly(resolved: &ResolvedConfig, input: &Path) -> Result<(), CliError> {
    ensure_out_dir(resolved)?;
    let dataset = load_dataset(resolved)?;
    let splits = split_dataset(resolved, &dataset)?;
    let scorer = fit_stream_scorer(resolved, &dataset, &splits.train.examples)?;
    let reference =
        anomaly::reference_scores(&scorer, &splits.calibration.examples).map_err(runtime)?;

    let batch = data::load(input).map_err(runtime)?;
    if batch.feature_names != dataset.feature_names {
        return Err(CliError::Runtime(format!(
            "batch feature columns {:?} do not match the training data's {:?}",
            batch.feature_names, dataset.feature_names
        )));
    }
    let epsilon = resolved.config.anomaly.epsilon;
    let mut rng = seed_rng(resolved.seed ^ SALT_ANOMALY);
    let detection =
        anomaly::batch_detect(&reference, &batch.examples, &scorer, epsilon, &mut rng)
            .map_err(runtime)?;

    let jsonl_path = resolved.output_dir.join("anomaly.jsonl");
    let mut jsonl = open_jsonl(&jsonl_path)?;
    let mut stdout = std::io::stdout().lock();
    for (ex, v) in batch.examples.iter().zip(&detection.verdicts) {
        let record = VerdictRecord {
            example_id: ex.id.clone(),
            p_value: v.p_value,
            threshold: v.threshold,
            is_anomaly: v.is_anomaly,
            score: v.score,
        };
        let line = serde_json::to_string(&record).map_err(runtime)?;
        writeln!(stdout, "{line}").map_err(runtime)?;
        writeln!(jsonl, "{line}").map_err(runtime)?;
    }
    jsonl.flush().map_err(runtime)?;
    write_json(
        &resolved.output_dir.join("anomaly_summary.json"),
        &AnomalySummary {
            n: detection.verdicts.len(),
            alarm_count: detection.alarm_count,
            alarm_rate: detection.alarm_rate,
            epsilon,
        },
    )?;
    Ok(())
}

