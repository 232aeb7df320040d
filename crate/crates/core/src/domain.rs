//! Shared domain types and the score-orientation convention.
//!
//! Every scorer in this crate emits *nonconformity*: higher means stranger.
//! Literature that works with conformity scores (higher = more typical) maps
//! onto this convention through [`to_nonconformity`], which negates the value.
//! Prediction sets keep labels whose p-value exceeds the significance
//! `epsilon = 1 - confidence`; the anomaly detector flags points with
//! `p <= epsilon`. Both conventions are stated where they apply.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interned class label. Ids are assigned in load order, which fixes
/// iteration order and tie-breaking across runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelId(pub usize);

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// The set of class labels known to a dataset, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelUniverse {
    names: Vec<String>,
}

impl LabelUniverse {
    pub fn new() -> Self {
        Self { names: Vec::new() }
    }

    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Self {
        let mut u = Self::new();
        for n in names {
            u.intern(&n);
        }
        u
    }

    /// Returns the id for `name`, interning it if unseen.
    pub fn intern(&mut self, name: &str) -> LabelId {
        if let Some(id) = self.lookup(name) {
            return id;
        }
        self.names.push(name.to_string());
        LabelId(self.names.len() - 1)
    }

    pub fn lookup(&self, name: &str) -> Option<LabelId> {
        self.names.iter().position(|n| n == name).map(LabelId)
    }

    pub fn require(&self, name: &str) -> Result<LabelId> {
        self.lookup(name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// All label ids in interning order.
    pub fn ids(&self) -> impl Iterator<Item = LabelId> + '_ {
        (0..self.names.len()).map(LabelId)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Target outcome of an example: a class label or a real value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class(LabelId),
    Real(f64),
}

impl Target {
    pub fn as_class(&self) -> Option<LabelId> {
        match self {
            Target::Class(id) => Some(*id),
            Target::Real(_) => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Target::Real(y) => Some(*y),
            Target::Class(_) => None,
        }
    }
}

/// One observation: input features plus optional target outcome.
///
/// Immutable after construction. `group_tags` carry subgroup membership for
/// conditional-coverage audits; intersectional subgroups are evaluated into
/// single tags at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub features: Vec<f64>,
    pub target: Option<Target>,
    #[serde(default)]
    pub group_tags: BTreeSet<String>,
}

impl LabeledExample {
    pub fn new(id: impl Into<String>, features: Vec<f64>, target: Option<Target>) -> Self {
        Self {
            id: id.into(),
            features,
            target,
            group_tags: BTreeSet::new(),
        }
    }

    pub fn with_tags(mut self, tags: impl IntoIterator<Item = String>) -> Self {
        self.group_tags.extend(tags);
        self
    }

    pub fn class(&self) -> Result<LabelId> {
        match self.target {
            Some(Target::Class(id)) => Ok(id),
            Some(Target::Real(_)) => Err(Error::TargetKindMismatch {
                id: self.id.clone(),
                expected: "class",
            }),
            None => Err(Error::MissingTarget(self.id.clone())),
        }
    }

    pub fn real(&self) -> Result<f64> {
        match self.target {
            Some(Target::Real(y)) => Ok(y),
            Some(Target::Class(_)) => Err(Error::TargetKindMismatch {
                id: self.id.clone(),
                expected: "real",
            }),
            None => Err(Error::MissingTarget(self.id.clone())),
        }
    }
}

/// A strangeness score: higher = stranger. Always finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct NonconformityScore(f64);

impl NonconformityScore {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::NonFiniteScore(value))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Converts a conformity score (higher = more typical) into this crate's
/// nonconformity orientation by negation. Applying it twice is the identity.
pub fn to_nonconformity(conformity: f64) -> Result<NonconformityScore> {
    NonconformityScore::new(-conformity)
}

/// The significance comparison `p > epsilon`, with a relative guard of 1e-9
/// so that boundary ranks behave like their decimal values: `1 - 0.9` and
/// `1/10` differ by one ulp in binary, and the strict comparison would
/// otherwise flip exactly at the rank the guarantee pivots on. Every
/// consumer (set membership, interval rank selection, coverage counting,
/// anomaly thresholding) goes through this one predicate so they agree bit
/// for bit.
pub fn exceeds_significance(p: f64, epsilon: f64) -> bool {
    p > epsilon * (1.0 + 1e-9)
}

/// A confidence level in the open interval (0, 1).
///
/// Level 1 is rejected: it would force the all-labels set for classification
/// and the whole real line for regression, carrying no information.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub fn new(level: f64) -> Result<Self> {
        if level.is_finite() && level > 0.0 && level < 1.0 {
            Ok(Self(level))
        } else {
            Err(Error::InvalidConfidenceLevel(level))
        }
    }

    pub fn level(&self) -> f64 {
        self.0
    }

    /// Significance level `epsilon = 1 - level`.
    pub fn epsilon(&self) -> f64 {
        1.0 - self.0
    }
}

impl TryFrom<f64> for ConfidenceLevel {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ConfidenceLevel> for f64 {
    fn from(c: ConfidenceLevel) -> f64 {
        c.0
    }
}

/// Caveats attached to a prediction by the conditional-validity machinery.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionNotes {
    /// The category's calibration set was below the size floor and the
    /// prediction fell back to pooled calibration: only the marginal
    /// guarantee applies.
    pub marginal_only: bool,
    /// The example's region had no tuning data at fit time; its score
    /// adjustment is the untrained default.
    pub unadjusted_region: bool,
}

/// Classification output: one p-value per label plus the derived label set.
///
/// A label is in the set iff its p-value strictly exceeds `epsilon`.
/// The empty set is a legitimate output and is reported, never suppressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetPrediction {
    /// p-values indexed by `LabelId`.
    pub p_values: Vec<f64>,
    pub confidence: ConfidenceLevel,
    /// Membership indexed by `LabelId`; `members[l] == (p_values[l] > epsilon)`.
    pub members: Vec<bool>,
    #[serde(default)]
    pub notes: PredictionNotes,
}

impl SetPrediction {
    pub fn from_p_values(p_values: Vec<f64>, confidence: ConfidenceLevel) -> Self {
        let eps = confidence.epsilon();
        let members = p_values.iter().map(|&p| exceeds_significance(p, eps)).collect();
        Self {
            p_values,
            confidence,
            members,
            notes: PredictionNotes::default(),
        }
    }

    pub fn contains(&self, label: LabelId) -> bool {
        self.members.get(label.0).copied().unwrap_or(false)
    }

    pub fn labels(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| LabelId(i))
    }

    pub fn size(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }
}

/// Regression output: an interval, possibly unbounded on either side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalPrediction {
    pub lo: f64,
    pub hi: f64,
    pub unbounded: bool,
    pub confidence: ConfidenceLevel,
    #[serde(default)]
    pub notes: PredictionNotes,
}

impl IntervalPrediction {
    pub fn new(lo: f64, hi: f64, confidence: ConfidenceLevel) -> Self {
        assert!(lo <= hi, "interval endpoints out of order: [{lo}, {hi}]");
        Self {
            lo,
            hi,
            unbounded: lo == f64::NEG_INFINITY || hi == f64::INFINITY,
            confidence,
            notes: PredictionNotes::default(),
        }
    }

    pub fn whole_line(confidence: ConfidenceLevel) -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY, confidence)
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }

    /// Width of a bounded interval; `None` when unbounded.
    pub fn width(&self) -> Option<f64> {
        if self.unbounded {
            None
        } else {
            Some(self.hi - self.lo)
        }
    }
}

/// Either kind of prediction output, for audit plumbing and serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prediction {
    Set(SetPrediction),
    Interval(IntervalPrediction),
}

impl Prediction {
    /// Whether the prediction contains the true target.
    pub fn covers(&self, truth: &Target) -> Result<bool> {
        match (self, truth) {
            (Prediction::Set(s), Target::Class(label)) => Ok(s.contains(*label)),
            (Prediction::Interval(iv), Target::Real(y)) => Ok(iv.contains(*y)),
            (Prediction::Set(_), Target::Real(_)) => Err(Error::Unsupported(
                "set prediction scored against a real target".into(),
            )),
            (Prediction::Interval(_), Target::Class(_)) => Err(Error::Unsupported(
                "interval prediction scored against a class target".into(),
            )),
        }
    }

    pub fn notes(&self) -> PredictionNotes {
        match self {
            Prediction::Set(s) => s.notes,
            Prediction::Interval(iv) => iv.notes,
        }
    }
}
