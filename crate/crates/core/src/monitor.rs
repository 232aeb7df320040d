//! Conformal testing for generalization risk: online p-values on a data
//! stream and betting martingales that grow when the stream stops being
//! exchangeable with its past.
//!
//! The scorer is fixed before the stream starts (trained on a pre-stream
//! split). Each arriving example is scored and ranked against the reservoir
//! of all previous stream scores; under exchangeability the resulting
//! smoothed p-values are i.i.d. uniform on (0, 1], so any betting martingale
//! against uniformity has expectation 1 and Ville's inequality bounds the
//! false alarm rate: `P(sup M_n >= 1/delta) <= delta`. Under drift the
//! p-values concentrate near 0 and the martingale grows — a warning signal
//! that the model behind the scorer should be rebuilt.

use serde::{Deserialize, Serialize};

use crate::data::generate;
use crate::data::synth::SyntheticSpec;
use crate::domain::LabeledExample;
use crate::error::{Error, Result};
use crate::rng::{draw_tau, seed_rng, SeededRng};
use crate::scorers::{ExampleScorer, KnnDistanceScorer};

/// The betting function applied to each p-value.
///
/// A power calibrator `f(p) = e * p^(e-1)` integrates to 1 over [0, 1], so
/// the running product is a nonnegative martingale under uniform p-values.
/// The grid mixture averages the 19 power-calibrator martingales with
/// `e in {0.05, 0.10, ..., 0.95}`, avoiding the choice of `e` while staying
/// a valid martingale; it is the default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BettingConfig {
    Power { epsilon: f64 },
    GridMixture,
}

impl BettingConfig {
    pub const GRID: [f64; 19] = [
        0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70,
        0.75, 0.80, 0.85, 0.90, 0.95,
    ];

    /// `ln` of each grid point, computed once.
    fn grid_ln() -> &'static [f64; 19] {
        static GRID_LN: std::sync::OnceLock<[f64; 19]> = std::sync::OnceLock::new();
        GRID_LN.get_or_init(|| BettingConfig::GRID.map(f64::ln))
    }

    fn validate(&self) -> Result<()> {
        match self {
            BettingConfig::Power { epsilon } => {
                if *epsilon > 0.0 && *epsilon < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidRate(*epsilon))
                }
            }
            BettingConfig::GridMixture => Ok(()),
        }
    }
}

/// `ln(e * p^(e-1))`.
fn log_power_bet(betting_epsilon: f64, p: f64) -> f64 {
    betting_epsilon.ln() + (betting_epsilon - 1.0) * p.ln()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Alarm threshold with false alarm probability at most `delta` under
/// exchangeability: `c = 1/delta` (Ville's inequality).
pub fn alarm_threshold_for(delta: f64) -> Result<f64> {
    if delta > 0.0 && delta < 1.0 {
        Ok(1.0 / delta)
    } else {
        Err(Error::InvalidRate(delta))
    }
}

/// Online conformal p-value transducer: a fixed scorer plus the reservoir of
/// all past stream scores, in arrival order.
#[derive(Debug, Clone)]
pub struct OnlineConformalSource<S> {
    scorer: S,
    reservoir: Vec<f64>,
    sorted: Vec<f64>,
    rng: SeededRng,
}

impl<S: ExampleScorer> OnlineConformalSource<S> {
    pub fn new(scorer: S, smoothing_seed: u64) -> Self {
        Self {
            scorer,
            reservoir: Vec::new(),
            sorted: Vec::new(),
            rng: seed_rng(smoothing_seed),
        }
    }

    /// Scores in arrival order.
    pub fn reservoir(&self) -> &[f64] {
        &self.reservoir
    }

    /// Smoothed p-value of the next stream item against the reservoir, then
    /// appends its score. With an empty reservoir the p-value is tau itself,
    /// uniform by construction.
    pub fn next_p_value(&mut self, example: &LabeledExample) -> Result<f64> {
        let score = self.scorer.score_example(example)?.value();
        let m = self.sorted.len();
        let count_gt = m - self.sorted.partition_point(|&s| s <= score);
        let count_ge = m - self.sorted.partition_point(|&s| s < score);
        let count_eq = count_ge - count_gt;
        let tau = draw_tau(&mut self.rng);
        let p = (count_gt as f64 + tau * (count_eq as f64 + 1.0)) / (m as f64 + 1.0);

        self.reservoir.push(score);
        let at = self.sorted.partition_point(|&s| s < score);
        self.sorted.insert(at, score);
        Ok(p)
    }
}

/// Running betting martingale over a p-value stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleState {
    betting: BettingConfig,
    /// Alarm threshold `c > 1`.
    threshold: f64,
    log_m: f64,
    /// Per-grid-point log-martingales (mixture only).
    per_grid_log: Vec<f64>,
    n: usize,
    alarmed: bool,
    first_alarm: Option<usize>,
    history: Vec<(usize, f64)>,
}

impl MartingaleState {
    pub fn new(betting: BettingConfig, threshold: f64) -> Result<Self> {
        betting.validate()?;
        if !threshold.is_finite() || threshold <= 1.0 {
            return Err(Error::InvalidRate(threshold));
        }
        let per_grid_log = match betting {
            BettingConfig::GridMixture => vec![0.0; BettingConfig::GRID.len()],
            BettingConfig::Power { .. } => Vec::new(),
        };
        Ok(Self {
            betting,
            threshold,
            log_m: 0.0,
            per_grid_log,
            n: 0,
            alarmed: false,
            first_alarm: None,
            history: Vec::new(),
        })
    }

    /// Multiplies the martingale by the bet on `p`. Sets (and latches) the
    /// alarm when `M_n >= threshold`.
    pub fn update(&mut self, p: f64) -> Result<()> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidRate(p));
        }
        match &self.betting {
            BettingConfig::Power { epsilon } => {
                self.log_m += log_power_bet(*epsilon, p);
            }
            BettingConfig::GridMixture => {
                let ln_p = p.ln();
                let grid_ln = BettingConfig::grid_ln();
                for (i, acc) in self.per_grid_log.iter_mut().enumerate() {
                    *acc += grid_ln[i] + (BettingConfig::GRID[i] - 1.0) * ln_p;
                }
                self.log_m =
                    log_sum_exp(&self.per_grid_log) - (BettingConfig::GRID.len() as f64).ln();
            }
        }
        self.n += 1;
        self.history.push((self.n, self.log_m));
        if !self.alarmed && self.log_m >= self.threshold.ln() {
            self.alarmed = true;
            self.first_alarm = Some(self.n);
        }
        Ok(())
    }

    pub fn log_martingale(&self) -> f64 {
        self.log_m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// True once any prefix reached the threshold.
    pub fn alarmed(&self) -> bool {
        self.alarmed
    }

    /// 1-based step index of the first threshold crossing.
    pub fn first_alarm_index(&self) -> Option<usize> {
        self.first_alarm
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn history(&self) -> &[(usize, f64)] {
        &self.history
    }
}

/// One monitor step, in the JSON-lines shape the CLI emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: usize,
    pub p: f64,
    pub log_martingale: f64,
    pub alarmed: bool,
}

/// Feeds one labeled example through the monitor: p-value against the
/// reservoir, bet, alarm check.
pub fn observe<S: ExampleScorer>(
    source: &mut OnlineConformalSource<S>,
    state: &mut MartingaleState,
    example: &LabeledExample,
) -> Result<StepRecord> {
    let p = source.next_p_value(example)?;
    state.update(p)?;
    Ok(StepRecord {
        n: state.n(),
        p,
        log_martingale: state.log_martingale(),
        alarmed: state.alarmed(),
    })
}

/// Changepoint detection benchmark on a synthetic 1-D Gaussian stream with
/// an unsupervised k-NN distance scorer trained on pre-change data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangepointBenchmark {
    pub length: usize,
    pub change_index: usize,
    pub pre_mean: f64,
    pub pre_sd: f64,
    pub post_mean: f64,
    pub post_sd: f64,
    /// Pre-stream training set size for the scorer.
    pub train_size: usize,
    pub scorer_k: usize,
    pub betting: BettingConfig,
    pub false_alarm_prob: f64,
    pub seed: u64,
}

/// What the benchmark observed over one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// 1-based step of the first alarm, if any.
    pub first_alarm_index: Option<usize>,
    /// `first_alarm_index - change_index`; negative means a premature alarm.
    pub detection_delay: Option<i64>,
    pub final_log_martingale: f64,
    pub steps: usize,
    pub change_index: usize,
}

impl ChangepointBenchmark {
    pub fn run(&self) -> Result<DetectionReport> {
        let train = generate(&SyntheticSpec::ChangepointStream {
            length: self.train_size,
            change_index: self.train_size, // never changes
            pre_mean: self.pre_mean,
            pre_sd: self.pre_sd,
            post_mean: self.post_mean,
            post_sd: self.post_sd,
            seed: self.seed ^ 0x9e37_79b9_7f4a_7c15,
        })?;
        let stream = generate(&SyntheticSpec::ChangepointStream {
            length: self.length,
            change_index: self.change_index,
            pre_mean: self.pre_mean,
            pre_sd: self.pre_sd,
            post_mean: self.post_mean,
            post_sd: self.post_sd,
            seed: self.seed,
        })?;

        let scorer = KnnDistanceScorer::fit(&train.examples, self.scorer_k)?;
        let mut source =
            OnlineConformalSource::new(scorer, self.seed ^ 0x5851_f42d_4c95_7f2d);
        let mut state = MartingaleState::new(
            self.betting.clone(),
            alarm_threshold_for(self.false_alarm_prob)?,
        )?;
        for ex in &stream.examples {
            observe(&mut source, &mut state, ex)?;
        }
        Ok(DetectionReport {
            first_alarm_index: state.first_alarm_index(),
            detection_delay: state
                .first_alarm_index()
                .map(|i| i as i64 - self.change_index as i64),
            final_log_martingale: state.log_martingale(),
            steps: state.n(),
            change_index: self.change_index,
        })
    }
}
