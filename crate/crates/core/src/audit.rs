//! Coverage, inefficiency, calibration-curve, and subgroup-bias reporting.
//!
//! Conventions, stated once: empty prediction sets have size 0 and always
//! miss; unbounded intervals always cover but are excluded from the mean
//! width (and counted separately) so the inefficiency statistic stays
//! finite. Calibration checks use the exact two-sided binomial test — desk
//! scale sample sizes make normal approximations sloppy.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::conditional::Taxonomy;
use crate::domain::{ConfidenceLevel, LabeledExample, Prediction, Target};
use crate::error::{Error, Result};
use crate::stats::{binomial_band, binomial_test_two_sided};

/// Per-group coverage tally. Counts are integers so the weighted-average
/// identity against the marginal is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCoverage {
    pub n: usize,
    pub covered: usize,
}

impl GroupCoverage {
    pub fn rate(&self) -> f64 {
        self.covered as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n: usize,
    pub covered: usize,
    /// `covered / n`.
    pub marginal: f64,
    pub per_group: BTreeMap<String, GroupCoverage>,
}

/// Fraction of predictions containing the truth, overall and per group tag.
/// `groups`, when given, must align with `predictions`; an example may carry
/// several tags and then counts toward each.
pub fn coverage(
    predictions: &[Prediction],
    truths: &[Target],
    groups: Option<&[BTreeSet<String>]>,
) -> Result<CoverageReport> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if let Some(groups) = groups {
        if groups.len() != predictions.len() {
            return Err(Error::LengthMismatch {
                left: groups.len(),
                right: predictions.len(),
            });
        }
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    let mut covered = 0usize;
    let mut per_group: BTreeMap<String, GroupCoverage> = BTreeMap::new();
    for (i, (pred, truth)) in predictions.iter().zip(truths).enumerate() {
        let hit = pred.covers(truth)?;
        covered += hit as usize;
        if let Some(groups) = groups {
            for tag in &groups[i] {
                let g = per_group.entry(tag.clone()).or_insert(GroupCoverage {
                    n: 0,
                    covered: 0,
                });
                g.n += 1;
                g.covered += hit as usize;
            }
        }
    }
    Ok(CoverageReport {
        n: predictions.len(),
        covered,
        marginal: covered as f64 / predictions.len() as f64,
        per_group,
    })
}

/// N-criterion statistics: mean set size for classification, mean width of
/// bounded intervals for regression.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InefficiencyStats {
    pub n: usize,
    pub set_count: usize,
    pub empty_set_count: usize,
    pub mean_set_size: Option<f64>,
    pub interval_count: usize,
    pub unbounded_interval_count: usize,
    /// Mean width over bounded intervals only.
    pub mean_interval_width: Option<f64>,
}

impl InefficiencyStats {
    fn add(&mut self, pred: &Prediction) {
        self.n += 1;
        match pred {
            Prediction::Set(s) => {
                self.set_count += 1;
                if s.is_empty() {
                    self.empty_set_count += 1;
                }
            }
            Prediction::Interval(iv) => {
                self.interval_count += 1;
                if iv.unbounded {
                    self.unbounded_interval_count += 1;
                }
            }
        }
    }

    fn finish(&mut self, size_sum: f64, width_sum: f64) {
        if self.set_count > 0 {
            self.mean_set_size = Some(size_sum / self.set_count as f64);
        }
        let bounded = self.interval_count - self.unbounded_interval_count;
        if bounded > 0 {
            self.mean_interval_width = Some(width_sum / bounded as f64);
        }
    }

    /// The single inefficiency number for tables: set size when sets were
    /// audited, interval width otherwise.
    pub fn headline(&self) -> Option<f64> {
        self.mean_set_size.or(self.mean_interval_width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InefficiencyReport {
    pub overall: InefficiencyStats,
    pub per_group: BTreeMap<String, InefficiencyStats>,
}

pub fn inefficiency(
    predictions: &[Prediction],
    groups: Option<&[BTreeSet<String>]>,
) -> Result<InefficiencyReport> {
    if let Some(groups) = groups {
        if groups.len() != predictions.len() {
            return Err(Error::LengthMismatch {
                left: groups.len(),
                right: predictions.len(),
            });
        }
    }
    let mut overall = InefficiencyStats::default();
    let mut overall_sums = (0.0f64, 0.0f64);
    let mut per_group: BTreeMap<String, (InefficiencyStats, f64, f64)> = BTreeMap::new();
    for (i, pred) in predictions.iter().enumerate() {
        let (size, width) = match pred {
            Prediction::Set(s) => (s.size() as f64, 0.0),
            Prediction::Interval(iv) => (0.0, iv.width().unwrap_or(0.0)),
        };
        overall.add(pred);
        overall_sums.0 += size;
        overall_sums.1 += width;
        if let Some(groups) = groups {
            for tag in &groups[i] {
                let slot = per_group
                    .entry(tag.clone())
                    .or_insert((InefficiencyStats::default(), 0.0, 0.0));
                slot.0.add(pred);
                slot.1 += size;
                slot.2 += width;
            }
        }
    }
    overall.finish(overall_sums.0, overall_sums.1);
    let per_group = per_group
        .into_iter()
        .map(|(k, (mut stats, s, w))| {
            stats.finish(s, w);
            (k, stats)
        })
        .collect();
    Ok(InefficiencyReport { overall, per_group })
}

/// One calibration-curve grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub level: f64,
    pub coverage: f64,
    /// Exact two-sided binomial p-value of the observed coverage against the
    /// nominal level.
    pub binomial_p: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub points: Vec<CurvePoint>,
}

impl CalibrationCurve {
    /// Plot-ready CSV: `level,coverage,binomial_p,n`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "level,coverage,binomial_p,n")?;
        for p in &self.points {
            writeln!(w, "{},{},{},{}", p.level, p.coverage, p.binomial_p, p.n)?;
        }
        Ok(())
    }
}

/// Recomputes predictions at every level of the grid and tests empirical
/// coverage against the nominal level with the exact binomial test.
pub fn calibration_curve<F>(
    mut predict: F,
    data: &[LabeledExample],
    grid: &[ConfidenceLevel],
) -> Result<CalibrationCurve>
where
    F: FnMut(&LabeledExample, ConfidenceLevel) -> Result<Prediction>,
{
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation data"));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &level in grid {
        let mut covered = 0u64;
        for ex in data {
            let truth = ex
                .target
                .as_ref()
                .ok_or_else(|| Error::MissingTarget(ex.id.clone()))?;
            let pred = predict(ex, level)?;
            covered += pred.covers(truth)? as u64;
        }
        let n = data.len() as u64;
        points.push(CurvePoint {
            level: level.level(),
            coverage: covered as f64 / n as f64,
            binomial_p: binomial_test_two_sided(covered, n, level.level())?,
            n: data.len(),
        });
    }
    Ok(CalibrationCurve { points })
}

/// Everything the coverage/inefficiency machinery knows about one evaluated
/// predictor, bundled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub coverage: CoverageReport,
    pub inefficiency: InefficiencyReport,
    pub calibration_curve: CalibrationCurve,
}

/// Runs the full audit of one predictor at a primary level plus a
/// calibration-curve grid, grouping by each example's tags.
pub fn audit_report<F>(
    mut predict: F,
    data: &[LabeledExample],
    primary: ConfidenceLevel,
    grid: &[ConfidenceLevel],
) -> Result<AuditReport>
where
    F: FnMut(&LabeledExample, ConfidenceLevel) -> Result<Prediction>,
{
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation data"));
    }
    let mut predictions = Vec::with_capacity(data.len());
    let mut truths = Vec::with_capacity(data.len());
    let mut groups = Vec::with_capacity(data.len());
    for ex in data {
        let truth = ex
            .target
            .as_ref()
            .ok_or_else(|| Error::MissingTarget(ex.id.clone()))?;
        predictions.push(predict(ex, primary)?);
        truths.push(*truth);
        groups.push(ex.group_tags.clone());
    }
    Ok(AuditReport {
        coverage: coverage(&predictions, &truths, Some(&groups))?,
        inefficiency: inefficiency(&predictions, Some(&groups))?,
        calibration_curve: calibration_curve(predict, data, grid)?,
    })
}

/// One line of the subgroup-bias comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub variant: String,
    pub subgroup: String,
    pub level: f64,
    pub n: usize,
    /// `None` when the subgroup has no evaluation examples.
    pub coverage: Option<f64>,
    pub inefficiency: Option<f64>,
    pub unbounded_intervals: usize,
    /// Coverage count fell outside the exact binomial 99% band around the
    /// nominal level.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalRow {
    pub variant: String,
    pub level: f64,
    pub n: usize,
    pub coverage: f64,
    pub inefficiency: Option<f64>,
    pub flagged: bool,
}

/// Comparative per-variant, per-subgroup coverage and inefficiency table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupBiasReport {
    pub rows: Vec<SubgroupRow>,
    pub marginals: Vec<MarginalRow>,
}

impl SubgroupBiasReport {
    /// CSV: `variant,subgroup,level,coverage,mean_set_size,flagged` (the
    /// inefficiency column carries mean interval width for regression runs;
    /// empty cells mean no evaluation examples).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "variant,subgroup,level,coverage,mean_set_size,flagged")?;
        for r in &self.rows {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.variant,
                r.subgroup,
                r.level,
                fmt(r.coverage),
                fmt(r.inefficiency),
                r.flagged
            )?;
        }
        Ok(())
    }
}

/// A named prediction routine, one per compared variant.
pub type VariantPredictor<'a> =
    Box<dyn FnMut(&LabeledExample, ConfidenceLevel) -> Result<Prediction> + 'a>;

/// Evaluates each variant at each level, broken down by the taxonomy's
/// subgroups (categorized at the observed target). Subgroups with zero
/// evaluation examples are reported with null statistics, never as errors.
pub fn subgroup_bias_report(
    variants: Vec<(String, VariantPredictor<'_>)>,
    data: &[LabeledExample],
    taxonomy: &Taxonomy,
    levels: &[ConfidenceLevel],
) -> Result<SubgroupBiasReport> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation data"));
    }
    let categories: Vec<usize> = data
        .iter()
        .map(|ex| taxonomy.categorize_observed(ex))
        .collect::<Result<_>>()?;
    let n_cats = taxonomy.n_categories();

    let mut rows = Vec::new();
    let mut marginals = Vec::new();
    for (name, mut predict) in variants {
        for &level in levels {
            let mut predictions = Vec::with_capacity(data.len());
            let mut truths = Vec::with_capacity(data.len());
            for ex in data {
                let truth = ex
                    .target
                    .as_ref()
                    .ok_or_else(|| Error::MissingTarget(ex.id.clone()))?;
                predictions.push(predict(ex, level)?);
                truths.push(*truth);
            }

            let mut covered = vec![0usize; n_cats];
            let mut totals = vec![0usize; n_cats];
            let mut size_sums = vec![0.0f64; n_cats];
            let mut size_counts = vec![0usize; n_cats];
            let mut unbounded = vec![0usize; n_cats];
            let mut covered_all = 0usize;
            for ((pred, truth), &cat) in predictions.iter().zip(&truths).zip(&categories) {
                let hit = pred.covers(truth)?;
                covered[cat] += hit as usize;
                covered_all += hit as usize;
                totals[cat] += 1;
                match pred {
                    Prediction::Set(s) => {
                        size_sums[cat] += s.size() as f64;
                        size_counts[cat] += 1;
                    }
                    Prediction::Interval(iv) => {
                        if let Some(w) = iv.width() {
                            size_sums[cat] += w;
                            size_counts[cat] += 1;
                        } else {
                            unbounded[cat] += 1;
                        }
                    }
                }
            }

            for cat in 0..n_cats {
                let n = totals[cat];
                let (cov, ineff, flagged) = if n == 0 {
                    (None, None, false)
                } else {
                    let (lo, hi) = binomial_band(n as u64, level.level(), 0.99)?;
                    let k = covered[cat] as u64;
                    (
                        Some(covered[cat] as f64 / n as f64),
                        if size_counts[cat] > 0 {
                            Some(size_sums[cat] / size_counts[cat] as f64)
                        } else {
                            None
                        },
                        k < lo || k > hi,
                    )
                };
                rows.push(SubgroupRow {
                    variant: name.clone(),
                    subgroup: taxonomy.category_name(cat).to_string(),
                    level: level.level(),
                    n,
                    coverage: cov,
                    inefficiency: ineff,
                    unbounded_intervals: unbounded[cat],
                    flagged,
                });
            }

            let n_all = data.len();
            let (lo, hi) = binomial_band(n_all as u64, level.level(), 0.99)?;
            let ineff_all = inefficiency(&predictions, None)?;
            marginals.push(MarginalRow {
                variant: name.clone(),
                level: level.level(),
                n: n_all,
                coverage: covered_all as f64 / n_all as f64,
                inefficiency: ineff_all.overall.headline(),
                flagged: (covered_all as u64) < lo || (covered_all as u64) > hi,
            });
        }
    }
    Ok(SubgroupBiasReport { rows, marginals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{IntervalPrediction, LabelId, SetPrediction};
    use approx::assert_relative_eq;

    fn set_pred(p_values: Vec<f64>, level: f64) -> Prediction {
        Prediction::Set(SetPrediction::from_p_values(
            p_values,
            ConfidenceLevel::new(level).unwrap(),
        ))
    }

    fn tags(tag: &str) -> BTreeSet<String> {
        BTreeSet::from([tag.to_string()])
    }

    #[test]
    fn equal_groups_average_to_example_two_marginal() {
        // Two equal-size groups at 94% and 85% coverage: marginal 89.5%.
        let mut predictions = Vec::new();
        let mut truths = Vec::new();
        let mut groups = Vec::new();
        for i in 0..100 {
            // Group m: covered iff i < 94. Label 0 is the truth.
            let p = if i < 94 { vec![0.5, 0.5] } else { vec![0.01, 0.5] };
            predictions.push(set_pred(p, 0.9));
            truths.push(Target::Class(LabelId(0)));
            groups.push(tags("sex=m"));
        }
        for i in 0..100 {
            let p = if i < 85 { vec![0.5, 0.5] } else { vec![0.01, 0.5] };
            predictions.push(set_pred(p, 0.9));
            truths.push(Target::Class(LabelId(0)));
            groups.push(tags("sex=f"));
        }
        let report = coverage(&predictions, &truths, Some(&groups)).unwrap();
        assert_relative_eq!(report.marginal, 0.895);
        assert_relative_eq!(report.per_group["sex=m"].rate(), 0.94);
        assert_relative_eq!(report.per_group["sex=f"].rate(), 0.85);
        // Weighted-average identity, exact on the integer counts.
        let total: usize = report.per_group.values().map(|g| g.covered).sum();
        assert_eq!(total, report.covered);
    }

    #[test]
    fn all_covered_is_one_and_lengths_must_match() {
        let predictions = vec![set_pred(vec![0.9], 0.5); 7];
        let truths = vec![Target::Class(LabelId(0)); 7];
        let report = coverage(&predictions, &truths, None).unwrap();
        assert_eq!(report.marginal, 1.0);
        assert!(coverage(&predictions, &truths[..6], None).is_err());
    }

    #[test]
    fn coverage_matches_naive_recount_on_random_fixture() {
        use rand::Rng;
        let mut rng = crate::rng::seed_rng(500);
        let mut predictions = Vec::new();
        let mut truths = Vec::new();
        for _ in 0..500 {
            let p: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            predictions.push(set_pred(p, 0.8));
            truths.push(Target::Class(LabelId(rng.random_range(0..4))));
        }
        let report = coverage(&predictions, &truths, None).unwrap();
        // Independent recount.
        let expected = predictions
            .iter()
            .zip(&truths)
            .filter(|(p, t)| match (p, t) {
                (Prediction::Set(s), Target::Class(l)) => s.contains(*l),
                _ => unreachable!(),
            })
            .count();
        assert_eq!(report.covered, expected);
        assert_relative_eq!(report.marginal, expected as f64 / 500.0);
    }

    #[test]
    fn mean_set_size_counts_empties() {
        // Sets {B, D}, {A}, {}: mean (2 + 1 + 0) / 3 = 1.
        let predictions = vec![
            set_pred(vec![0.01, 0.5, 0.01, 0.5], 0.9),
            set_pred(vec![0.5, 0.01, 0.01, 0.01], 0.9),
            set_pred(vec![0.01, 0.01, 0.01, 0.01], 0.9),
        ];
        let report = inefficiency(&predictions, None).unwrap();
        assert_relative_eq!(report.overall.mean_set_size.unwrap(), 1.0);
        assert_eq!(report.overall.empty_set_count, 1);
    }

    #[test]
    fn interval_width_excludes_unbounded() {
        let conf = ConfidenceLevel::new(0.9).unwrap();
        let predictions = vec![
            Prediction::Interval(IntervalPrediction::new(1.0, 19.0, conf)),
            Prediction::Interval(IntervalPrediction::new(-10.0, 10.0, conf)),
            Prediction::Interval(IntervalPrediction::whole_line(conf)),
        ];
        let report = inefficiency(&predictions, None).unwrap();
        // (18 + 20) / 2 = 19; the unbounded one is counted, not averaged.
        assert_relative_eq!(report.overall.mean_interval_width.unwrap(), 19.0);
        assert_eq!(report.overall.unbounded_interval_count, 1);
    }

    #[test]
    fn permutation_invariance() {
        let conf = ConfidenceLevel::new(0.9).unwrap();
        let mut predictions = vec![
            Prediction::Interval(IntervalPrediction::new(0.0, 1.0, conf)),
            Prediction::Interval(IntervalPrediction::new(0.0, 5.0, conf)),
            Prediction::Interval(IntervalPrediction::new(-1.0, 1.0, conf)),
        ];
        let mut truths = vec![Target::Real(0.5), Target::Real(10.0), Target::Real(0.0)];
        let c1 = coverage(&predictions, &truths, None).unwrap();
        let i1 = inefficiency(&predictions, None).unwrap();
        predictions.reverse();
        truths.reverse();
        let c2 = coverage(&predictions, &truths, None).unwrap();
        let i2 = inefficiency(&predictions, None).unwrap();
        assert_eq!(c1.marginal, c2.marginal);
        assert_eq!(i1.overall, i2.overall);
    }

    #[test]
    fn degenerate_grid_equals_coverage() {
        let conf = ConfidenceLevel::new(0.8).unwrap();
        let data: Vec<LabeledExample> = (0..50)
            .map(|i| {
                LabeledExample::new(i.to_string(), vec![i as f64], Some(Target::Real(i as f64)))
            })
            .collect();
        // Interval [x-1, x+1] always covers y = x.
        let curve = calibration_curve(
            |ex, level| {
                Ok(Prediction::Interval(IntervalPrediction::new(
                    ex.features[0] - 1.0,
                    ex.features[0] + 1.0,
                    level,
                )))
            },
            &data,
            &[conf],
        )
        .unwrap();
        assert_eq!(curve.points.len(), 1);
        assert_eq!(curve.points[0].coverage, 1.0);
        assert_eq!(curve.points[0].n, 50);
        assert!(calibration_curve(|_, _| unreachable!(), &[], &[conf]).is_err());
    }

    #[test]
    fn curve_csv_shape() {
        let curve = CalibrationCurve {
            points: vec![CurvePoint {
                level: 0.9,
                coverage: 0.91,
                binomial_p: 0.5,
                n: 100,
            }],
        };
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "level,coverage,binomial_p,n\n0.9,0.91,0.5,100\n");
    }
}
