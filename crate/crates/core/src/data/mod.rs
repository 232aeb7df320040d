//! Dataset ingestion, split management, and synthetic generators.
//!
//! # CSV schema
//!
//! One header row is mandatory. Columns are recognized by name:
//!
//! - `example_id` (optional): unique row identifier; defaults to the
//!   0-based row index rendered as a string.
//! - `label` (optional): class target. When present, every row must have a
//!   non-empty label.
//! - `target` (optional): real-valued target. Mutually exclusive with
//!   `label`.
//! - `group:<name>` (optional, repeatable): subgroup membership. A non-empty
//!   cell `v` tags the example with `<name>=v`.
//! - every other column is a numeric feature; all values must parse to
//!   finite floats.
//!
//! Floats are written back with 17 significant digits, so
//! `write` followed by `load` reproduces the dataset exactly.

pub mod synth;

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{LabelUniverse, LabeledExample, Target};
use crate::error::{Error, Result};
use crate::icp::SplitConfig;
use crate::rng::seed_rng;

pub use synth::{generate, SyntheticSpec};

const ID_COLUMN: &str = "example_id";
const LABEL_COLUMN: &str = "label";
const TARGET_COLUMN: &str = "target";
const GROUP_PREFIX: &str = "group:";

/// Task implied by the dataset's target column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskKind {
    Classification(LabelUniverse),
    Regression,
    Unlabeled,
}

impl TaskKind {
    pub fn universe(&self) -> Option<&LabelUniverse> {
        match self {
            TaskKind::Classification(u) => Some(u),
            _ => None,
        }
    }
}

/// An in-memory dataset: examples plus the column metadata needed to
/// interpret and round-trip them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub examples: Vec<LabeledExample>,
    pub task: TaskKind,
    /// Names of `group:` columns, in header order.
    pub group_columns: Vec<String>,
}

impl Dataset {
    /// Same metadata, different rows. Used by `split`.
    pub fn with_examples(&self, examples: Vec<LabeledExample>) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            examples,
            task: self.task.clone(),
            group_columns: self.group_columns.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn universe(&self) -> Option<&LabelUniverse> {
        self.task.universe()
    }
}

/// Loads a dataset from a CSV file.
pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    load_from_reader(file)
}

/// Loads a dataset from any CSV reader. See the module docs for the schema.
pub fn load_from_reader<R: Read>(reader: R) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv.headers()?.clone();

    let mut id_col = None;
    let mut label_col = None;
    let mut target_col = None;
    let mut group_cols: Vec<(usize, String)> = Vec::new();
    let mut feature_cols: Vec<(usize, String)> = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        match name {
            ID_COLUMN => id_col = Some(i),
            LABEL_COLUMN => label_col = Some(i),
            TARGET_COLUMN => target_col = Some(i),
            _ => {
                if let Some(g) = name.strip_prefix(GROUP_PREFIX) {
                    group_cols.push((i, g.to_string()));
                } else {
                    feature_cols.push((i, name.to_string()));
                }
            }
        }
    }
    if label_col.is_some() && target_col.is_some() {
        return Err(Error::Unsupported(
            "dataset has both `label` and `target` columns".into(),
        ));
    }

    let mut universe = LabelUniverse::new();
    let mut examples = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for (row_idx, record) in csv.records().enumerate() {
        let row = row_idx + 1; // 1-based, excluding header
        let record = record?;
        let get = |col: usize| -> Result<&str> {
            record.get(col).ok_or(Error::MalformedRow {
                row,
                message: format!("missing column {col}"),
            })
        };

        let id = match id_col {
            Some(c) => {
                let raw = get(c)?;
                if raw.is_empty() {
                    return Err(Error::MalformedRow {
                        row,
                        message: "empty example_id".into(),
                    });
                }
                raw.to_string()
            }
            None => row_idx.to_string(),
        };
        if !seen_ids.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }

        let mut features = Vec::with_capacity(feature_cols.len());
        for (c, name) in &feature_cols {
            let raw = get(*c)?;
            let v: f64 = raw.parse().map_err(|_| Error::MalformedRow {
                row,
                message: format!("column {name:?}: cannot parse {raw:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    row,
                    message: format!("column {name:?}: non-finite value {raw:?}"),
                });
            }
            features.push(v);
        }

        let target = if let Some(c) = label_col {
            let raw = get(c)?;
            if raw.is_empty() {
                return Err(Error::MalformedRow {
                    row,
                    message: "empty label".into(),
                });
            }
            Some(Target::Class(universe.intern(raw)))
        } else if let Some(c) = target_col {
            let raw = get(c)?;
            let v: f64 = raw.parse().map_err(|_| Error::MalformedRow {
                row,
                message: format!("cannot parse target {raw:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    row,
                    message: format!("non-finite target {raw:?}"),
                });
            }
            Some(Target::Real(v))
        } else {
            None
        };

        let mut example = LabeledExample::new(id, features, target);
        for (c, name) in &group_cols {
            let raw = get(*c)?;
            if !raw.is_empty() {
                example.group_tags.insert(format!("{name}={raw}"));
            }
        }
        examples.push(example);
    }

    let task = if label_col.is_some() {
        TaskKind::Classification(universe)
    } else if target_col.is_some() {
        TaskKind::Regression
    } else {
        TaskKind::Unlabeled
    };

    Ok(Dataset {
        feature_names: feature_cols.into_iter().map(|(_, n)| n).collect(),
        examples,
        task,
        group_columns: group_cols.into_iter().map(|(_, n)| n).collect(),
    })
}

/// Formats a float with 17 significant digits (round-trip safe).
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a dataset to a CSV file in the schema `load` reads.
pub fn write(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_to_writer(dataset, file)
}

pub fn write_to_writer<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);

    let mut header = vec![ID_COLUMN.to_string()];
    header.extend(dataset.feature_names.iter().cloned());
    match &dataset.task {
        TaskKind::Classification(_) => header.push(LABEL_COLUMN.into()),
        TaskKind::Regression => header.push(TARGET_COLUMN.into()),
        TaskKind::Unlabeled => {}
    }
    for g in &dataset.group_columns {
        header.push(format!("{GROUP_PREFIX}{g}"));
    }
    csv.write_record(&header)?;

    for ex in &dataset.examples {
        let mut row = vec![ex.id.clone()];
        for v in &ex.features {
            row.push(format_float(*v));
        }
        match (&dataset.task, &ex.target) {
            (TaskKind::Classification(u), Some(Target::Class(l))) => {
                row.push(u.name(*l).to_string())
            }
            (TaskKind::Regression, Some(Target::Real(y))) => row.push(format_float(*y)),
            (TaskKind::Unlabeled, None) => {}
            _ => {
                return Err(Error::Unsupported(format!(
                    "example {} target does not match the dataset task",
                    ex.id
                )))
            }
        }
        for g in &dataset.group_columns {
            let prefix = format!("{g}=");
            let value = ex
                .group_tags
                .iter()
                .find_map(|t| t.strip_prefix(&prefix))
                .unwrap_or("");
            row.push(value.to_string());
        }
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

/// Disjoint, exhaustive splits of a dataset.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub calibration: Dataset,
    pub tuning: Dataset,
    pub test: Dataset,
}

/// Randomly partitions `dataset` per the split fractions, seeded by
/// `config.seed`. Counts are floors of `fraction * n`; the remainder goes to
/// the test split. The same seed always produces the same partition.
pub fn split(dataset: &Dataset, config: &SplitConfig) -> Result<Splits> {
    config.validate()?;
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed_rng(config.seed);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);

    let n_train = (config.train_fraction * n as f64).floor() as usize;
    let n_cal = (config.calibration_fraction * n as f64).floor() as usize;
    let n_tune = (config.tuning_fraction.unwrap_or(0.0) * n as f64).floor() as usize;

    let take = |range: std::ops::Range<usize>| -> Vec<LabeledExample> {
        order[range]
            .iter()
            .map(|&i| dataset.examples[i].clone())
            .collect()
    };
    let train = take(0..n_train);
    let calibration = take(n_train..n_train + n_cal);
    let tuning = take(n_train + n_cal..n_train + n_cal + n_tune);
    let test = take(n_train + n_cal + n_tune..n);

    Ok(Splits {
        train: dataset.with_examples(train),
        calibration: dataset.with_examples(calibration),
        tuning: dataset.with_examples(tuning),
        test: dataset.with_examples(test),
    })
}
