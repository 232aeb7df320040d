//! Subgroup taxonomies: mappings from (example, candidate target) to a
//! category id.
//!
//! A taxonomy is specified as an ordered list of categories, each a
//! conjunction of predicates over feature values and/or the target.
//! Categories are evaluated in order; the first full match wins. Examples
//! matching no category fall into an implicit `rest` category, so the map
//! is total.
//!
//! JSON shape:
//!
//! ```json
//! {
//!   "categories": [
//!     {"name": "minority-1", "all": [
//!       {"field": "region", "op": "==", "value": 1},
//!       {"field": "target", "op": ">=", "value": 10.0}
//!     ]}
//!   ]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{LabelUniverse, LabeledExample, Target};
use crate::error::{Error, Result};

pub const TARGET_FIELD: &str = "target";
pub const REST_CATEGORY: &str = "rest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "in")]
    In,
}

/// Constant side of a predicate. Strings are only meaningful against class
/// targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredicateValue {
    Number(f64),
    Text(String),
    NumberList(Vec<f64>),
    TextList(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicateSpec {
    /// A feature name, or `"target"`.
    pub field: String,
    pub op: Comparator,
    pub value: PredicateValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySpec {
    pub name: String,
    pub all: Vec<PredicateSpec>,
}

/// Declarative taxonomy, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomySpec {
    pub categories: Vec<CategorySpec>,
}

impl TaxonomySpec {
    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The trivial taxonomy: everything in `rest`.
    pub fn single_category() -> Self {
        Self { categories: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Field {
    Feature(usize),
    Target,
}

#[derive(Debug, Clone, PartialEq)]
struct CompiledPredicate {
    field: Field,
    op: Comparator,
    value: PredicateValue,
}

/// A compiled taxonomy bound to a dataset's feature names (and label
/// universe, for classification).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaxonomySerde", into = "TaxonomySerde")]
pub struct Taxonomy {
    spec: TaxonomySpec,
    feature_names: Vec<String>,
    universe: Option<LabelUniverse>,
    #[allow(clippy::type_complexity)]
    compiled: Vec<Vec<CompiledPredicate>>,
    depends_on_target: bool,
}

#[derive(Serialize, Deserialize)]
struct TaxonomySerde {
    spec: TaxonomySpec,
    feature_names: Vec<String>,
    universe: Option<LabelUniverse>,
}

impl TryFrom<TaxonomySerde> for Taxonomy {
    type Error = Error;
    fn try_from(s: TaxonomySerde) -> Result<Self> {
        Taxonomy::compile(&s.spec, &s.feature_names, s.universe.as_ref())
    }
}

impl From<Taxonomy> for TaxonomySerde {
    fn from(t: Taxonomy) -> Self {
        TaxonomySerde {
            spec: t.spec,
            feature_names: t.feature_names,
            universe: t.universe,
        }
    }
}

impl Taxonomy {
    pub fn compile(
        spec: &TaxonomySpec,
        feature_names: &[String],
        universe: Option<&LabelUniverse>,
    ) -> Result<Self> {
        let mut compiled = Vec::with_capacity(spec.categories.len());
        let mut depends_on_target = false;
        for cat in &spec.categories {
            let mut preds = Vec::with_capacity(cat.all.len());
            for p in &cat.all {
                let field = if p.field == TARGET_FIELD {
                    depends_on_target = true;
                    Field::Target
                } else {
                    let idx = feature_names
                        .iter()
                        .position(|n| *n == p.field)
                        .ok_or_else(|| {
                            Error::Taxonomy(format!(
                                "category {:?}: unknown field {:?}",
                                cat.name, p.field
                            ))
                        })?;
                    Field::Feature(idx)
                };
                // Text values only make sense on class targets; check what
                // can be checked here.
                match (&field, &p.value) {
                    (Field::Feature(_), PredicateValue::Text(_))
                    | (Field::Feature(_), PredicateValue::TextList(_)) => {
                        return Err(Error::Taxonomy(format!(
                            "category {:?}: feature {:?} compared to a string",
                            cat.name, p.field
                        )));
                    }
                    (Field::Target, PredicateValue::Text(t)) => {
                        if let Some(u) = universe {
                            u.require(t)?;
                        }
                    }
                    (Field::Target, PredicateValue::TextList(ts)) => {
                        if let Some(u) = universe {
                            for t in ts {
                                u.require(t)?;
                            }
                        }
                    }
                    _ => {}
                }
                match (&p.op, &p.value) {
                    (Comparator::In, PredicateValue::Number(_))
                    | (Comparator::In, PredicateValue::Text(_)) => {
                        return Err(Error::Taxonomy(format!(
                            "category {:?}: `in` needs a list value",
                            cat.name
                        )));
                    }
                    (op, PredicateValue::NumberList(_)) | (op, PredicateValue::TextList(_))
                        if *op != Comparator::In =>
                    {
                        return Err(Error::Taxonomy(format!(
                            "category {:?}: list value needs the `in` comparator",
                            cat.name
                        )));
                    }
                    _ => {}
                }
                preds.push(CompiledPredicate {
                    field,
                    op: p.op,
                    value: p.value.clone(),
                });
            }
            compiled.push(preds);
        }
        Ok(Self {
            spec: spec.clone(),
            feature_names: feature_names.to_vec(),
            universe: universe.cloned(),
            compiled,
            depends_on_target,
        })
    }

    /// Number of categories including the implicit `rest`.
    pub fn n_categories(&self) -> usize {
        self.spec.categories.len() + 1
    }

    pub fn rest_id(&self) -> usize {
        self.spec.categories.len()
    }

    pub fn category_name(&self, id: usize) -> &str {
        if id == self.rest_id() {
            REST_CATEGORY
        } else {
            &self.spec.categories[id].name
        }
    }

    /// Whether any predicate references the target. Such taxonomies are
    /// evaluated per candidate target at prediction time and cannot serve as
    /// example-only region maps.
    pub fn depends_on_target(&self) -> bool {
        self.depends_on_target
    }

    pub fn spec(&self) -> &TaxonomySpec {
        &self.spec
    }

    /// Maps (example, target) to its category. `target` may be `None` only
    /// for taxonomies that never reference the target.
    pub fn categorize(&self, example: &LabeledExample, target: Option<&Target>) -> Result<usize> {
        'cats: for (i, preds) in self.compiled.iter().enumerate() {
            for p in preds {
                if !self.eval(p, example, target)? {
                    continue 'cats;
                }
            }
            return Ok(i);
        }
        Ok(self.rest_id())
    }

    /// Convenience: category of an example at its observed target.
    pub fn categorize_observed(&self, example: &LabeledExample) -> Result<usize> {
        self.categorize(example, example.target.as_ref())
    }

    fn eval(
        &self,
        pred: &CompiledPredicate,
        example: &LabeledExample,
        target: Option<&Target>,
    ) -> Result<bool> {
        match &pred.field {
            Field::Feature(idx) => {
                let got = *example.features.get(*idx).ok_or_else(|| {
                    Error::DimensionMismatch {
                        expected: *idx + 1,
                        got: example.features.len(),
                        at: Some(format!("example {}", example.id)),
                    }
                })?;
                Ok(Self::compare_number(got, pred.op, &pred.value))
            }
            Field::Target => {
                let target = target.ok_or_else(|| {
                    Error::Taxonomy(format!(
                        "predicate on {TARGET_FIELD:?} needs a target for example {}",
                        example.id
                    ))
                })?;
                match target {
                    Target::Real(y) => Ok(Self::compare_number(*y, pred.op, &pred.value)),
                    Target::Class(label) => {
                        let universe = self.universe.as_ref().ok_or_else(|| {
                            Error::Taxonomy(
                                "taxonomy was compiled without a label universe".into(),
                            )
                        })?;
                        let name = universe.name(*label);
                        match (&pred.op, &pred.value) {
                            (Comparator::Eq, PredicateValue::Text(t)) => Ok(name == t),
                            (Comparator::In, PredicateValue::TextList(ts)) => {
                                Ok(ts.iter().any(|t| t == name))
                            }
                            _ => Err(Error::Taxonomy(format!(
                                "class target only supports `==` a string or `in` a string list, got {:?} {:?}",
                                pred.op, pred.value
                            ))),
                        }
                    }
                }
            }
        }
    }

    fn compare_number(got: f64, op: Comparator, value: &PredicateValue) -> bool {
        match (op, value) {
            (Comparator::Eq, PredicateValue::Number(v)) => got == *v,
            (Comparator::Lt, PredicateValue::Number(v)) => got < *v,
            (Comparator::Le, PredicateValue::Number(v)) => got <= *v,
            (Comparator::Gt, PredicateValue::Number(v)) => got > *v,
            (Comparator::Ge, PredicateValue::Number(v)) => got >= *v,
            (Comparator::In, PredicateValue::NumberList(vs)) => vs.contains(&got),
            _ => false,
        }
    }
}
