//! Behavioural indices per run and per condition.
//!
//! Invalid trials count toward `T` (target rate denominator) and pay 0, but
//! are excluded from choice shares, from both sides of every shift ratio and
//! from the monomorphy judgement. Ratios with an empty denominator are
//! reported as `None` and skipped when averaging across runs.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agents::{Arm, Choice};
use crate::bandit::RewardStructure;
use crate::error::{Error, Result};
use crate::session::{RunLog, TrialRecord};

pub const DEFAULT_WARMUP: usize = 10;
/// Reference target rate for the adjusted choice bias.
pub const ADJUSTED_BIAS_REFERENCE: f64 = 0.90;
/// A run is stubborn when its Y share is at or beyond these bounds.
pub const STUBBORN_HIGH: f64 = 0.8;
pub const STUBBORN_LOW: f64 = 0.2;
const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub run_id: u64,
    pub n_trials: usize,
    pub n_invalid: usize,
    pub warmup: usize,
    pub total_reward: u32,
    pub target_rate: f64,
    pub loss_shift: Option<f64>,
    pub win_shift: Option<f64>,
    /// Share of valid choices that were Y.
    pub c_bar: Option<f64>,
    pub choice_bias: Option<f64>,
    pub post_warmup_monomorphic: bool,
    pub post_warmup_loss_shift: Option<f64>,
    pub post_warmup_win_shift: Option<f64>,
    pub adjusted_choice_bias: Option<f64>,
}

impl RunMetrics {
    pub fn invalid_rate(&self) -> f64 {
        self.n_invalid as f64 / self.n_trials as f64
    }

    /// `None` when the run has no valid choice.
    pub fn stubborn(&self) -> Option<bool> {
        self.c_bar.map(|c| c >= STUBBORN_HIGH || c <= STUBBORN_LOW)
    }
}

/// Switch probability after losses and after wins over transitions starting
/// at index `from` or later, counting only pairs of valid trials.
fn shift_rates(trials: &[TrialRecord], from: usize) -> (Option<f64>, Option<f64>) {
    let mut switches = [0u32; 2];
    let mut totals = [0u32; 2];
    for pair in trials.windows(2).skip(from) {
        let (Some(a), Some(b)) = (pair[0].choice.arm(), pair[1].choice.arm()) else {
            continue;
        };
        let outcome = usize::from(pair[0].reward == 1);
        totals[outcome] += 1;
        switches[outcome] += u32::from(a != b);
    }
    let rate = |i: usize| (totals[i] > 0).then(|| f64::from(switches[i]) / f64::from(totals[i]));
    (rate(0), rate(1))
}

/// Run-level indices. `warmup` trials are skipped for the post-warm-up ones.
pub fn run_metrics(run: &RunLog, structure: &RewardStructure, warmup: usize) -> Result<RunMetrics> {
    let trials = &run.trials;
    let t = trials.len();
    if t == 0 {
        return Err(Error::invalid("cannot compute metrics of an empty run"));
    }
    if warmup >= t {
        return Err(Error::invalid(format!("warm-up {warmup} must be shorter than the run ({t})")));
    }
    let target = structure.target_arm();
    let mut n_valid = 0usize;
    let mut n_y = 0usize;
    let mut n_target = 0usize;
    let mut total_reward = 0u32;
    for tr in trials {
        if let Some(arm) = tr.choice.arm() {
            n_valid += 1;
            n_y += usize::from(arm == Arm::Y);
            n_target += usize::from(arm == target);
            total_reward += u32::from(tr.reward);
        }
    }
    let target_rate = n_target as f64 / t as f64;
    let c_bar = (n_valid > 0).then(|| n_y as f64 / n_valid as f64);
    let (loss_shift, win_shift) = shift_rates(trials, 0);
    let (post_warmup_loss_shift, post_warmup_win_shift) = shift_rates(trials, warmup);

    let mut post_arms = trials[warmup..].iter().filter_map(|tr| tr.choice.arm());
    let post_warmup_monomorphic = match post_arms.next() {
        Some(first) => post_arms.all(|a| a == first),
        None => false,
    };

    Ok(RunMetrics {
        run_id: run.run_id,
        n_trials: t,
        n_invalid: t - n_valid,
        warmup,
        total_reward,
        target_rate,
        loss_shift,
        win_shift,
        c_bar,
        choice_bias: c_bar.map(|c| c - 0.5),
        post_warmup_monomorphic,
        post_warmup_loss_shift,
        post_warmup_win_shift,
        adjusted_choice_bias: structure
            .is_asymmetric()
            .then(|| target_rate - ADJUSTED_BIAS_REFERENCE),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    TotalReward,
    TargetRate,
    ShareX,
    ShareY,
    ChoiceBias,
    AdjustedChoiceBias,
    LossShift,
    WinShift,
    PostWarmupLossShift,
    PostWarmupWinShift,
    Stubbornness,
    Amplification,
    Rigidity,
    InvalidRate,
}

impl Metric {
    pub const ALL: [Metric; 14] = [
        Metric::TotalReward,
        Metric::TargetRate,
        Metric::ShareX,
        Metric::ShareY,
        Metric::ChoiceBias,
        Metric::AdjustedChoiceBias,
        Metric::LossShift,
        Metric::WinShift,
        Metric::PostWarmupLossShift,
        Metric::PostWarmupWinShift,
        Metric::Stubbornness,
        Metric::Amplification,
        Metric::Rigidity,
        Metric::InvalidRate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::TotalReward => "total_reward",
            Metric::TargetRate => "target_rate",
            Metric::ShareX => "share_x",
            Metric::ShareY => "share_y",
            Metric::ChoiceBias => "choice_bias",
            Metric::AdjustedChoiceBias => "adjusted_choice_bias",
            Metric::LossShift => "loss_shift",
            Metric::WinShift => "win_shift",
            Metric::PostWarmupLossShift => "post_warmup_loss_shift",
            Metric::PostWarmupWinShift => "post_warmup_win_shift",
            Metric::Stubbornness => "stubbornness_rate",
            Metric::Amplification => "amplification_index",
            Metric::Rigidity => "rigidity_index",
            Metric::InvalidRate => "invalid_rate",
        }
    }

    /// Per-run value whose across-run mean gives this metric.
    pub fn per_run(self, m: &RunMetrics) -> Option<f64> {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            Metric::TotalReward => Some(f64::from(m.total_reward)),
            Metric::TargetRate => Some(m.target_rate),
            Metric::ShareX => m.c_bar.map(|c| 1.0 - c),
            Metric::ShareY => m.c_bar,
            Metric::ChoiceBias => m.choice_bias,
            Metric::AdjustedChoiceBias => m.adjusted_choice_bias,
            Metric::LossShift => m.loss_shift,
            Metric::WinShift => m.win_shift,
            Metric::PostWarmupLossShift => m.post_warmup_loss_shift,
            Metric::PostWarmupWinShift => m.post_warmup_win_shift,
            Metric::Stubbornness => m.stubborn().map(flag),
            Metric::Amplification => Some(flag(m.post_warmup_monomorphic)),
            Metric::Rigidity => m.post_warmup_loss_shift.map(|l| 1.0 - l),
            Metric::InvalidRate => Some(m.invalid_rate()),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Across-run mean with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricStat {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Runs contributing a defined value.
    pub n: usize,
}

impl MetricStat {
    /// `None` for an empty sample. A single value gets a zero-width interval.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let half = if n > 1 {
            let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
            Z_95 * sd / nf.sqrt()
        } else {
            0.0
        };
        Some(Self { mean, ci_low: mean - half, ci_high: mean + half, n })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub condition_id: String,
    pub n_runs: usize,
    pub metrics: Vec<(Metric, MetricStat)>,
    /// Fraction of runs with a choice share at or beyond 0.8 / 0.2.
    pub stubbornness_rate: Option<f64>,
    /// Fraction of runs whose post-warm-up choices are all one arm.
    pub amplification_index: f64,
    /// `1 - mean(post-warm-up loss-shift)`.
    pub rigidity_index: Option<f64>,
    /// Invalid trials over all trials.
    pub invalid_rate: f64,
    pub n_trials_total: usize,
    pub n_invalid_total: usize,
}

impl ConditionSummary {
    pub fn get(&self, metric: Metric) -> Option<&MetricStat> {
        self.metrics.iter().find(|(m, _)| *m == metric).map(|(_, s)| s)
    }

    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.get(metric).map(|s| s.mean)
    }

    pub fn rows(&self) -> Vec<SummaryRow> {
        self.metrics
            .iter()
            .map(|(m, s)| SummaryRow {
                condition_id: self.condition_id.clone(),
                metric: m.as_str().to_string(),
                mean: s.mean,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                n: s.n,
            })
            .collect()
    }
}

/// Aggregates run metrics of one condition.
pub fn condition_summary(condition_id: &str, runs: &[RunMetrics]) -> Result<ConditionSummary> {
    if runs.len() < 2 {
        return Err(Error::invalid(format!(
            "condition `{condition_id}` has {} run(s); at least 2 are needed for an interval",
            runs.len()
        )));
    }
    let metrics: Vec<(Metric, MetricStat)> = Metric::ALL
        .iter()
        .filter_map(|&m| {
            let values: Vec<f64> = runs.iter().filter_map(|r| m.per_run(r)).collect();
            MetricStat::from_values(&values).map(|s| (m, s))
        })
        .collect();
    let pick = |m: Metric| metrics.iter().find(|(k, _)| *k == m).map(|(_, s)| s.mean);
    let n_trials_total: usize = runs.iter().map(|r| r.n_trials).sum();
    let n_invalid_total: usize = runs.iter().map(|r| r.n_invalid).sum();
    Ok(ConditionSummary {
        condition_id: condition_id.to_string(),
        n_runs: runs.len(),
        stubbornness_rate: pick(Metric::Stubbornness),
        amplification_index: pick(Metric::Amplification).unwrap_or(0.0),
        rigidity_index: pick(Metric::PostWarmupLossShift).map(|l| 1.0 - l),
        invalid_rate: n_invalid_total as f64 / n_trials_total as f64,
        n_trials_total,
        n_invalid_total,
        metrics,
    })
}

/// Expected total reward and target rate of the reference learner: the
/// oracle under an asymmetric structure, an unbiased chooser otherwise.
pub fn oracle_benchmarks(structure: &RewardStructure, n_trials: usize) -> Result<(f64, f64)> {
    if n_trials == 0 {
        return Err(Error::invalid("benchmarks need at least one trial"));
    }
    let t = n_trials as f64;
    if structure.is_asymmetric() {
        Ok((t * structure.p_x.max(structure.p_y), 1.0))
    } else {
        Ok((t * structure.p_x, 0.5))
    }
}

/// One row of the per-condition summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub condition_id: String,
    pub metric: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

pub fn write_summary_csv<W: Write>(w: W, summaries: &[ConditionSummary]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for s in summaries {
        for row in s.rows() {
            wtr.serialize(row)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<summary>", e))?;
    Ok(())
}

/// Long-format per-run values for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub condition_id: String,
    pub run_id: u64,
    pub metric: String,
    pub value: f64,
}

pub fn write_plot_data_csv<W: Write>(
    w: W,
    condition_id: &str,
    runs: &[RunMetrics],
    include_header: bool,
) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(include_header).from_writer(w);
    for r in runs {
        for m in Metric::ALL {
            if let Some(value) = m.per_run(r) {
                wtr.serialize(PlotRow {
                    condition_id: condition_id.to_string(),
                    run_id: r.run_id,
                    metric: m.as_str().to_string(),
                    value,
                })?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("<plot data>", e))?;
    Ok(())
}

/// Swaps X and Y in every trial, keeping rewards.
pub fn relabel(run: &RunLog) -> RunLog {
    let mut out = run.clone();
    for t in &mut out.trials {
        t.choice = match t.choice {
            Choice::X => Choice::Y,
            Choice::Y => Choice::X,
            Choice::Invalid => Choice::Invalid,
        };
    }
    out
}
