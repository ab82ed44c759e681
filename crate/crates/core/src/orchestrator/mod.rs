//! Experiment execution and the file-level workflows behind the CLI.
//!
//! Output layout of [`run`]:
//!
//! ```text
//! <out>/runs/<condition_id>.csv   one row per trial
//! <out>/summary.csv               condition_id, metric, mean, ci_low, ci_high, n
//! <out>/plot_data.csv             condition_id, run_id, metric, value
//! <out>/invalid_rates.csv         condition_id, n_trials, n_invalid, invalid_rate
//! ```
//!
//! A condition whose run-log file already exists is not executed again; its
//! file is read back and summarized instead.

pub mod logs;
pub mod plan;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{self, Agent, CohortSpec};
use crate::bandit::{BanditEnv, RewardStructure};
use crate::error::{Error, Result};
use crate::inference::{
    fit_hierarchical, per_run_loglik, posterior_predictive, split_half_reliability,
    HierarchicalFit, ReliabilityResult, SamplerConfig,
};
use crate::llm::{ChatProvider, HttpProvider, LlmAgent, LlmClient, MockProvider};
use crate::metrics::{self, ConditionSummary, Metric, RunMetrics};
use crate::rng;
use crate::rw_model::{FitDataset, GroupHyper};
use crate::session::{self, RunLog};
use logs::{ConditionLogs, ConditionMeta};
use plan::{AgentSpec, Condition, ExperimentPlan};

pub use plan::sanitize;

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Request cap per LLM agent, retries included.
    pub max_requests: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ConditionOutcome {
    pub condition_id: String,
    pub log_path: PathBuf,
    /// The log already existed and was reused.
    pub skipped: bool,
    pub summary: ConditionSummary,
    pub run_metrics: Vec<RunMetrics>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub conditions: Vec<ConditionOutcome>,
    pub summary_path: PathBuf,
}

impl RunOutcome {
    pub fn get(&self, condition_id: &str) -> Option<&ConditionOutcome> {
        self.conditions.iter().find(|c| c.condition_id == condition_id)
    }
}

fn build_clients(plan: &ExperimentPlan, opts: &RunOptions) -> Result<Vec<Option<Arc<LlmClient>>>> {
    plan.agents
        .iter()
        .map(|a| {
            let AgentSpec::Llm(spec) = a else { return Ok(None) };
            let (provider, config): (Arc<dyn ChatProvider>, _) = match (&spec.mock_script, &spec.provider) {
                (Some(script), None) => {
                    let config = crate::llm::ProviderConfig {
                        backoff_ms: 0,
                        ..crate::llm::ProviderConfig::new("mock://", &spec.label, "")
                    };
                    (Arc::new(MockProvider::from_file(script)?), config)
                }
                (None, Some(config)) => (Arc::new(HttpProvider::new(config.clone())?), config.clone()),
                _ => return Err(Error::invalid("LLM agent needs exactly one of mock_script or provider")),
            };
            let mut client = LlmClient::new(provider, config)?;
            if let Some(max) = opts.max_requests {
                client = client.with_budget(max);
            }
            Ok(Some(Arc::new(client)))
        })
        .collect()
}

fn execute_condition(
    cond: &Condition,
    plan: &ExperimentPlan,
    client: Option<&Arc<LlmClient>>,
) -> Result<Vec<RunLog>> {
    let cond_seed = rng::condition_seed(plan.master_seed, &cond.condition_id);
    (0..plan.n_runs as u64)
        .into_par_iter()
        .map(|run_id| {
            let seed = rng::run_seed(cond_seed, run_id);
            let mut env = BanditEnv::new(cond.structure.clone(), rng::derive_seed(seed, rng::ENV_STREAM));
            let mut agent: Box<dyn Agent> = match (&cond.agent, client, &cond.decoding) {
                (AgentSpec::Synthetic(s), _, _) => {
                    s.build(&cond.structure, rng::derive_seed(seed, rng::AGENT_STREAM))?
                }
                (AgentSpec::Llm(_), Some(c), Some(d)) => Box::new(LlmAgent::new(c.clone(), d.clone())),
                _ => return Err(Error::invalid("LLM condition without client or decoding")),
            };
            Ok(session::play(agent.as_mut(), &mut env, plan.n_trials, &cond.condition_id, run_id))
        })
        .collect()
}

fn meta_of(cond: &Condition) -> ConditionMeta {
    ConditionMeta {
        condition_id: cond.condition_id.clone(),
        agent: cond.agent.label(),
        structure: cond.structure.clone(),
        temperature: cond.decoding.as_ref().map(|d| d.temperature),
        top_p: cond.decoding.as_ref().map(|d| d.top_p),
    }
}

fn condition_metrics(
    condition_id: &str,
    runs: &[RunLog],
    structure: &RewardStructure,
    warmup: usize,
) -> Result<(ConditionSummary, Vec<RunMetrics>)> {
    let per_run = runs
        .iter()
        .map(|r| metrics::run_metrics(r, structure, warmup))
        .collect::<Result<Vec<_>>>()?;
    Ok((metrics::condition_summary(condition_id, &per_run)?, per_run))
}

/// Executes every condition of `plan` and writes logs and summaries under `out_dir`.
pub fn run(plan: &ExperimentPlan, out_dir: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    plan.validate()?;
    let conditions = plan.conditions()?;
    let clients = build_clients(plan, opts)?;
    let runs_dir = out_dir.join("runs");
    create_dir(&runs_dir)?;

    let mut outcomes = Vec::with_capacity(conditions.len());
    for cond in &conditions {
        let log_path = runs_dir.join(format!("{}.csv", cond.condition_id));
        let skipped = log_path.exists();
        let runs = if skipped {
            let loaded = logs::read_run_logs(&log_path)?;
            let matches = loaded.len() == 1
                && loaded[0].meta.condition_id == cond.condition_id
                && loaded[0].runs.len() == plan.n_runs
                && loaded[0].runs.iter().all(|r| r.trials.len() == plan.n_trials);
            if !matches {
                return Err(Error::AlreadyExists(log_path));
            }
            log::info!("{}: reusing existing log", cond.condition_id);
            loaded.into_iter().next().map(|c| c.runs).unwrap_or_default()
        } else {
            log::info!("{}: running {} x {}", cond.condition_id, plan.n_runs, plan.n_trials);
            let runs = execute_condition(cond, plan, clients[cond.agent_index].as_ref())?;
            write_atomic(&log_path, |w| logs::write_run_logs(w, &meta_of(cond), &runs))?;
            runs
        };
        let (summary, run_metrics) =
            condition_metrics(&cond.condition_id, &runs, &cond.structure, plan.warmup)?;
        if cond.agent.is_llm() {
            log::info!(
                "{}: invalid rate {:.4} ({} of {} trials)",
                cond.condition_id,
                summary.invalid_rate,
                summary.n_invalid_total,
                summary.n_trials_total
            );
        }
        outcomes.push(ConditionOutcome {
            condition_id: cond.condition_id.clone(),
            log_path,
            skipped,
            summary,
            run_metrics,
        });
    }

    let summary_path = out_dir.join("summary.csv");
    let summaries: Vec<ConditionSummary> = outcomes.iter().map(|o| o.summary.clone()).collect();
    write_atomic(&summary_path, |w| metrics::write_summary_csv(w, &summaries))?;
    write_atomic(&out_dir.join("plot_data.csv"), |w| {
        for (i, o) in outcomes.iter().enumerate() {
            metrics::write_plot_data_csv(&mut *w, &o.condition_id, &o.run_metrics, i == 0)?;
        }
        Ok(())
    })?;
    write_atomic(&out_dir.join("invalid_rates.csv"), |w| write_invalid_rates(w, &summaries))?;
    Ok(RunOutcome { conditions: outcomes, summary_path })
}

#[derive(Debug, Serialize, Deserialize)]
struct InvalidRateRow {
    condition_id: String,
    n_trials: usize,
    n_invalid: usize,
    invalid_rate: f64,
}

fn write_invalid_rates(w: &mut dyn Write, summaries: &[ConditionSummary]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for s in summaries {
        wtr.serialize(InvalidRateRow {
            condition_id: s.condition_id.clone(),
            n_trials: s.n_trials_total,
            n_invalid: s.n_invalid_total,
            invalid_rate: s.invalid_rate,
        })?;
    }
    wtr.flush().map_err(|e| Error::io("invalid_rates.csv", e))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Only fit conditions with this reward-structure label.
    pub structure: Option<String>,
    pub sampler: SamplerConfig,
    pub warmup: usize,
    /// Replicated datasets for the posterior predictive check (0 to skip).
    pub ppc_draws: usize,
    pub write_draws: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            structure: None,
            sampler: SamplerConfig::default(),
            warmup: metrics::DEFAULT_WARMUP,
            ppc_draws: 100,
            write_draws: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub condition_id: String,
    pub structure: RewardStructure,
    pub fit: HierarchicalFit,
    pub dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct PerRunRow {
    run_id: u64,
    a_mean: f64,
    tau_mean: f64,
    loglik_mean: f64,
}

#[derive(Debug, Serialize)]
struct PredictiveRow {
    metric: String,
    observed: Option<f64>,
    predictive_mean: f64,
    ci_low: f64,
    ci_high: f64,
}

fn write_fit_outputs(cond: &ConditionLogs, fit: &HierarchicalFit, dir: &Path, opts: &FitOptions) -> Result<()> {
    create_dir(dir)?;
    write_atomic(&dir.join("posterior_summary.csv"), |w| fit.summary.write_csv(w))?;
    if opts.write_draws {
        write_atomic(&dir.join("draws.csv"), |w| fit.write_draws_csv(w))?;
    }
    let data = FitDataset::from_logs(&cond.runs);
    let param_draws = fit.run_param_draws();
    let ll = per_run_loglik(&param_draws, &data)?;
    let n_draws = ll.len().max(1) as f64;
    let means = fit.per_run_means();
    write_atomic(&dir.join("per_run.csv"), |w| {
        let mut wtr = csv::Writer::from_writer(w);
        for (i, run) in cond.runs.iter().enumerate() {
            wtr.serialize(PerRunRow {
                run_id: run.run_id,
                a_mean: means[i].a,
                tau_mean: means[i].tau,
                loglik_mean: ll.iter().map(|row| row[i]).sum::<f64>() / n_draws,
            })?;
        }
        wtr.flush().map_err(|e| Error::io(dir, e))?;
        Ok(())
    })?;
    write_atomic(&dir.join("per_run_loglik.csv"), |w| {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["draw".to_string()];
        header.extend(cond.runs.iter().map(|r| format!("run_{}", r.run_id)));
        wtr.write_record(&header)?;
        for (k, row) in ll.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io(dir, e))?;
        Ok(())
    })?;
    if opts.ppc_draws > 0 {
        let n_trials = cond.runs.iter().map(|r| r.trials.len()).max().unwrap_or(0);
        let seed = rng::condition_seed(opts.sampler.master_seed, &cond.meta.condition_id);
        let ppc = posterior_predictive(
            &param_draws,
            &cond.meta.structure,
            opts.ppc_draws.min(param_draws.len()),
            n_trials,
            opts.warmup.min(n_trials.saturating_sub(1)),
            seed,
        )?;
        let observed = condition_metrics(
            &cond.meta.condition_id,
            &cond.runs,
            &cond.meta.structure,
            opts.warmup.min(n_trials.saturating_sub(1)),
        )?
        .0;
        write_atomic(&dir.join("posterior_predictive.csv"), |w| {
            let mut wtr = csv::Writer::from_writer(w);
            for p in &ppc.intervals {
                wtr.serialize(PredictiveRow {
                    metric: p.metric.as_str().to_string(),
                    observed: observed.mean(p.metric),
                    predictive_mean: p.mean,
                    ci_low: p.ci_low,
                    ci_high: p.ci_high,
                })?;
            }
            wtr.flush().map_err(|e| Error::io(dir, e))?;
            Ok(())
        })?;
    }
    Ok(())
}

fn select_conditions(inputs: &[PathBuf], structure: Option<&str>) -> Result<Vec<ConditionLogs>> {
    let all = logs::load_conditions(inputs)?;
    let selected: Vec<ConditionLogs> = all
        .into_iter()
        .filter(|c| structure.is_none_or(|s| c.meta.structure.label == s))
        .collect();
    if selected.is_empty() {
        return Err(Error::invalid("no run logs match the inputs and structure filter"));
    }
    for c in &selected {
        if c.runs.len() < 2 {
            return Err(Error::invalid(format!(
                "condition `{}` has {} run(s); a hierarchical fit needs at least 2",
                c.meta.condition_id,
                c.runs.len()
            )));
        }
    }
    Ok(selected)
}

/// Fits the hierarchical model separately to every condition in the logs.
/// Each condition holds a single reward structure, so mixed-structure input
/// yields one fit per structure.
pub fn fit(inputs: &[PathBuf], out_dir: &Path, opts: &FitOptions) -> Result<Vec<FitOutcome>> {
    opts.sampler.validate()?;
    let selected = select_conditions(inputs, opts.structure.as_deref())?;
    let mut out = Vec::new();
    for cond in &selected {
        log::info!("fitting {} ({} runs)", cond.meta.condition_id, cond.runs.len());
        let fit = fit_hierarchical(&FitDataset::from_logs(&cond.runs), &opts.sampler)?;
        let dir = out_dir.join("fits").join(&cond.meta.condition_id);
        write_fit_outputs(cond, &fit, &dir, opts)?;
        out.push(FitOutcome {
            condition_id: cond.meta.condition_id.clone(),
            structure: cond.meta.structure.clone(),
            fit,
            dir,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub condition_id: String,
    pub icc_a: f64,
    pub icc_tau: f64,
    pub n_subjects: usize,
    pub k: usize,
}

/// Split-half ICC(3,1) of per-run posterior means, per condition.
pub fn reliability(
    inputs: &[PathBuf],
    out_dir: &Path,
    structure: Option<&str>,
    sampler: &SamplerConfig,
) -> Result<Vec<(String, ReliabilityResult)>> {
    sampler.validate()?;
    let selected = select_conditions(inputs, structure)?;
    let mut results = Vec::new();
    for cond in &selected {
        log::info!("split-half fits for {}", cond.meta.condition_id);
        let r = split_half_reliability(&FitDataset::from_logs(&cond.runs), sampler)?;
        results.push((cond.meta.condition_id.clone(), r));
    }
    create_dir(out_dir)?;
    write_atomic(&out_dir.join("reliability.csv"), |w| {
        let mut wtr = csv::Writer::from_writer(w);
        for (id, r) in &results {
            wtr.serialize(ReliabilityRow {
                condition_id: id.clone(),
                icc_a: r.icc_a,
                icc_tau: r.icc_tau,
                n_subjects: r.n_subjects,
                k: r.k,
            })?;
        }
        wtr.flush().map_err(|e| Error::io(out_dir, e))?;
        Ok(())
    })?;
    Ok(results)
}

fn default_tol_a() -> f64 {
    0.05
}
fn default_tol_tau() -> f64 {
    0.5
}
fn default_max_rhat() -> f64 {
    1.01
}
fn default_max_div() -> f64 {
    0.02
}

/// Synthetic cohort and the tolerances its fit is scored against. Group
/// values are natural-scale; scales are on the probit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySpec {
    pub group_a: f64,
    pub group_tau: f64,
    pub sigma_a: f64,
    pub sigma_tau: f64,
    pub n_runs: usize,
    pub n_trials: usize,
    pub structure: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol_a")]
    pub tolerance_a: f64,
    #[serde(default = "default_tol_tau")]
    pub tolerance_tau: f64,
    #[serde(default = "default_max_rhat")]
    pub max_rhat: f64,
    #[serde(default = "default_max_div")]
    pub max_divergence_rate: f64,
}

impl RecoverySpec {
    pub fn cohort(&self) -> Result<CohortSpec> {
        if self.n_runs < 2 {
            return Err(Error::invalid(format!(
                "a recovery cohort needs at least 2 runs, got {}",
                self.n_runs
            )));
        }
        let spec = CohortSpec {
            hyper: GroupHyper::from_natural(self.group_a, self.group_tau, self.sigma_a, self.sigma_tau)?,
            n_runs: self.n_runs,
            n_trials: self.n_trials,
            structure: plan::structure_from_label(&self.structure)?,
            prime_x: false,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub quantity: String,
    pub truth: f64,
    pub estimate: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct RecoveryScorecard {
    pub rows: Vec<ScoreRow>,
    pub fit: HierarchicalFit,
    pub truth: Vec<crate::rw_model::RWParams>,
}

impl RecoveryScorecard {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn row(&self, quantity: &str) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }
}

#[derive(Debug, Serialize)]
struct PerRunRecovery {
    run_id: usize,
    true_a: f64,
    est_a: f64,
    true_tau: f64,
    est_tau: f64,
}

/// Simulates a cohort, fits it and scores the recovered group means.
pub fn recover(spec: &RecoverySpec, sampler: &SamplerConfig, out_dir: Option<&Path>) -> Result<RecoveryScorecard> {
    let cohort = spec.cohort()?;
    sampler.validate()?;
    let runs = agents::simulate_cohort(&cohort, spec.seed)?;
    let logs: Vec<RunLog> = runs.iter().map(|r| r.log.clone()).collect();
    let fit = fit_hierarchical(&FitDataset::from_logs(&logs), sampler)?;

    let (ga, gt) = (fit.group_a(), fit.group_tau());
    let max_rhat = fit.max_rhat().unwrap_or(f64::INFINITY);
    let div = fit.divergence_rate();
    let rows = vec![
        ScoreRow {
            quantity: "group_a".into(),
            truth: spec.group_a,
            estimate: ga.mean,
            ci_low: Some(ga.ci_low),
            ci_high: Some(ga.ci_high),
            tolerance: spec.tolerance_a,
            pass: (ga.mean - spec.group_a).abs() <= spec.tolerance_a,
        },
        ScoreRow {
            quantity: "group_tau".into(),
            truth: spec.group_tau,
            estimate: gt.mean,
            ci_low: Some(gt.ci_low),
            ci_high: Some(gt.ci_high),
            tolerance: spec.tolerance_tau,
            pass: (gt.mean - spec.group_tau).abs() <= spec.tolerance_tau,
        },
        ScoreRow {
            quantity: "max_rhat".into(),
            truth: 1.0,
            estimate: max_rhat,
            ci_low: None,
            ci_high: None,
            tolerance: spec.max_rhat - 1.0,
            pass: max_rhat <= spec.max_rhat,
        },
        ScoreRow {
            quantity: "divergence_rate".into(),
            truth: 0.0,
            estimate: div,
            ci_low: None,
            ci_high: None,
            tolerance: spec.max_divergence_rate,
            pass: div <= spec.max_divergence_rate,
        },
    ];
    let truth: Vec<_> = runs.iter().map(|r| r.params).collect();
    let card = RecoveryScorecard { rows, fit, truth };

    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_atomic(&dir.join("recovery.csv"), |w| {
            let mut wtr = csv::Writer::from_writer(w);
            for r in &card.rows {
                wtr.serialize(r)?;
            }
            wtr.flush().map_err(|e| Error::io(dir, e))?;
            Ok(())
        })?;
        let est = card.fit.per_run_means();
        write_atomic(&dir.join("per_run_recovery.csv"), |w| {
            let mut wtr = csv::Writer::from_writer(w);
            for (i, (t, e)) in card.truth.iter().zip(&est).enumerate() {
                wtr.serialize(PerRunRecovery { run_id: i, true_a: t.a, est_a: e.a, true_tau: t.tau, est_tau: e.tau })?;
            }
            wtr.flush().map_err(|e| Error::io(dir, e))?;
            Ok(())
        })?;
        write_atomic(&dir.join("posterior_summary.csv"), |w| card.fit.summary.write_csv(w))?;
        let meta = ConditionMeta {
            condition_id: cohort.condition_id(),
            agent: "cohort".into(),
            structure: cohort.structure.clone(),
            temperature: None,
            top_p: None,
        };
        write_atomic(&dir.join("cohort_runs.csv"), |w| logs::write_run_logs(w, &meta, &logs))?;
    }
    Ok(card)
}

/// Kind of summary file recognised by [`report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportInput {
    Conditions,
    Posterior,
    Reliability,
}

fn classify(path: &Path) -> Result<ReportInput> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { path: path.to_path_buf(), line: 1, message: format!("{other:?}") },
    })?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { path: path.to_path_buf(), line: 1, message: e.to_string() })?;
    let h: Vec<&str> = headers.iter().collect();
    match h.as_slice() {
        ["condition_id", "metric", "mean", "ci_low", "ci_high", "n"] => Ok(ReportInput::Conditions),
        ["parameter", "mean", "sd", "ci2.5", "ci97.5", "rhat", "ess_bulk"] => Ok(ReportInput::Posterior),
        ["condition_id", "icc_a", "icc_tau", "n_subjects", "k"] => Ok(ReportInput::Reliability),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "not a condition summary, posterior summary or reliability table".into(),
        }),
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push(rec.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Name of a fit: its directory for `.../<fit>/posterior_summary.csv`,
/// otherwise the file stem.
fn fit_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if stem == "posterior_summary" {
        if let Some(dir) = path.parent().and_then(Path::file_name) {
            return dir.to_string_lossy().into_owned();
        }
    }
    stem
}

#[derive(Debug, Clone, Default)]
pub struct ReportOutcome {
    pub files: Vec<PathBuf>,
    pub condition_rows: usize,
    pub posterior_rows: usize,
    pub reliability_rows: usize,
}

const POSTERIOR_COLUMNS: [&str; 6] = ["group_a", "group_tau", "mu_a", "mu_tau", "sigma_a", "sigma_tau"];

/// Consolidates summary files into report tables under `out_dir`. All
/// inputs are read and checked before anything is written.
pub fn report(inputs: &[PathBuf], out_dir: &Path) -> Result<ReportOutcome> {
    if inputs.is_empty() {
        return Err(Error::invalid("report needs at least one input file"));
    }
    for p in inputs {
        if !p.is_file() {
            return Err(Error::MissingInput(p.clone()));
        }
    }
    let mut conditions: Vec<metrics::SummaryRow> = Vec::new();
    let mut posteriors: Vec<(String, Vec<crate::inference::ParamSummary>)> = Vec::new();
    let mut reliabilities: Vec<ReliabilityRow> = Vec::new();
    for p in inputs {
        match classify(p)? {
            ReportInput::Conditions => conditions.extend(read_rows::<metrics::SummaryRow>(p)?),
            ReportInput::Posterior => posteriors.push((fit_name(p), read_rows(p)?)),
            ReportInput::Reliability => reliabilities.extend(read_rows::<ReliabilityRow>(p)?),
        }
    }

    create_dir(out_dir)?;
    let mut outcome = ReportOutcome::default();
    if !conditions.is_empty() {
        let rank = |m: &str| Metric::ALL.iter().position(|k| k.as_str() == m).unwrap_or(usize::MAX);
        let mut long = conditions.clone();
        // stable: keeps input order of conditions within a metric
        long.sort_by_key(|r| rank(&r.metric));
        let path = out_dir.join("report_conditions.csv");
        write_atomic(&path, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            for r in &long {
                wtr.serialize(r)?;
            }
            wtr.flush().map_err(|e| Error::io(out_dir, e))?;
            Ok(())
        })?;
        outcome.condition_rows = long.len();
        outcome.files.push(path);

        let mut ids: Vec<String> = Vec::new();
        for r in &conditions {
            if !ids.contains(&r.condition_id) {
                ids.push(r.condition_id.clone());
            }
        }
        let path = out_dir.join("report_conditions_wide.csv");
        write_atomic(&path, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            let mut header = vec!["condition_id".to_string()];
            for m in Metric::ALL {
                for s in ["mean", "ci_low", "ci_high", "n"] {
                    header.push(format!("{}_{s}", m.as_str()));
                }
            }
            wtr.write_record(&header)?;
            for id in &ids {
                let mut rec = vec![id.clone()];
                for m in Metric::ALL {
                    match conditions.iter().find(|r| &r.condition_id == id && r.metric == m.as_str()) {
                        Some(r) => rec.extend([r.mean, r.ci_low, r.ci_high, r.n as f64].map(|v| v.to_string())),
                        None => rec.extend(std::iter::repeat_n(String::new(), 4)),
                    }
                }
                wtr.write_record(&rec)?;
            }
            wtr.flush().map_err(|e| Error::io(out_dir, e))?;
            Ok(())
        })?;
        outcome.files.push(path);
    }
    if !posteriors.is_empty() {
        let path = out_dir.join("report_posterior.csv");
        write_atomic(&path, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            let mut header = vec!["fit".to_string()];
            for c in POSTERIOR_COLUMNS {
                header.extend([format!("{c}_mean"), format!("{c}_ci2.5"), format!("{c}_ci97.5")]);
            }
            header.push("max_rhat".into());
            wtr.write_record(&header)?;
            for (name, params) in &posteriors {
                let mut rec = vec![name.clone()];
                for c in POSTERIOR_COLUMNS {
                    match params.iter().find(|p| p.parameter == c) {
                        Some(p) => rec.extend([p.mean, p.ci_low, p.ci_high].map(|v| v.to_string())),
                        None => rec.extend(std::iter::repeat_n(String::new(), 3)),
                    }
                }
                let max_rhat = params
                    .iter()
                    .filter(|p| !p.parameter.starts_with("z_"))
                    .filter_map(|p| p.rhat)
                    .reduce(f64::max);
                rec.push(max_rhat.map(|v| v.to_string()).unwrap_or_default());
                wtr.write_record(&rec)?;
            }
            wtr.flush().map_err(|e| Error::io(out_dir, e))?;
            Ok(())
        })?;
        outcome.posterior_rows = posteriors.len();
        outcome.files.push(path);
    }
    if !reliabilities.is_empty() {
        let path = out_dir.join("report_reliability.csv");
        write_atomic(&path, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            for r in &reliabilities {
                wtr.serialize(r)?;
            }
            wtr.flush().map_err(|e| Error::io(out_dir, e))?;
            Ok(())
        })?;
        outcome.reliability_rows = reliabilities.len();
        outcome.files.push(path);
    }

    // long format: source, id, metric, stat, value
    let path = out_dir.join("report_plot_data.csv");
    write_atomic(&path, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["source", "id", "metric", "stat", "value"])?;
        for r in &conditions {
            for (stat, v) in [("mean", r.mean), ("ci_low", r.ci_low), ("ci_high", r.ci_high)] {
                wtr.write_record(["condition", &r.condition_id, &r.metric, stat, &v.to_string()])?;
            }
        }
        for (name, params) in &posteriors {
            for p in params.iter().filter(|p| POSTERIOR_COLUMNS.contains(&p.parameter.as_str())) {
                for (stat, v) in [("mean", p.mean), ("ci2.5", p.ci_low), ("ci97.5", p.ci_high)] {
                    wtr.write_record(["posterior", name, &p.parameter, stat, &v.to_string()])?;
                }
            }
        }
        for r in &reliabilities {
            for (metric, v) in [("icc_a", r.icc_a), ("icc_tau", r.icc_tau)] {
                wtr.write_record(["reliability", &r.condition_id, metric, "value", &v.to_string()])?;
            }
        }
        wtr.flush().map_err(|e| Error::io(out_dir, e))?;
        Ok(())
    })?;
    outcome.files.push(path);
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(text: &str) -> ExperimentPlan {
        ExperimentPlan::from_toml(text).unwrap()
    }

    const SMALL: &str = r#"
n_runs = 30
n_trials = 40
master_seed = 11
reward_structures = ["symmetric", "asymmetric"]
[[agents]]
kind = "random"
[[agents]]
kind = "wsls"
"#;

    #[test]
    fn run_writes_every_condition() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&plan(SMALL), dir.path(), &RunOptions::default()).unwrap();
        assert_eq!(out.conditions.len(), 4);
        for c in &out.conditions {
            assert!(c.log_path.exists());
            assert!(!c.skipped);
            assert_eq!(c.summary.n_trials_total, 30 * 40);
        }
        let summary = fs::read_to_string(&out.summary_path).unwrap();
        assert!(summary.starts_with("condition_id,metric,mean,ci_low,ci_high,n\n"));
        assert!(dir.path().join("plot_data.csv").exists());
        assert!(dir.path().join("invalid_rates.csv").exists());
    }

    #[test]
    fn rerun_reuses_logs() {
        let dir = tempfile::tempdir().unwrap();
        let p = plan(SMALL);
        let first = run(&p, dir.path(), &RunOptions::default()).unwrap();
        let bytes = fs::read(&first.conditions[0].log_path).unwrap();
        let second = run(&p, dir.path(), &RunOptions::default()).unwrap();
        assert!(second.conditions.iter().all(|c| c.skipped));
        assert_eq!(fs::read(&second.conditions[0].log_path).unwrap(), bytes);
        assert_eq!(first.conditions[0].summary, second.conditions[0].summary);

        let bigger = ExperimentPlan { n_runs: 31, ..p };
        assert!(matches!(run(&bigger, dir.path(), &RunOptions::default()), Err(Error::AlreadyExists(_))));
    }

    #[test]
    fn report_rejects_missing_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("report");
        assert!(report(&[], &out).is_err());
        assert!(matches!(report(&[dir.path().join("nope.csv")], &out), Err(Error::MissingInput(_))));
        assert!(!out.exists());
    }

    #[test]
    fn recovery_spec_validation() {
        let spec = RecoverySpec {
            group_a: 0.2,
            group_tau: 3.0,
            sigma_a: 0.1,
            sigma_tau: 0.1,
            n_runs: 0,
            n_trials: 100,
            structure: "asymmetric".into(),
            seed: 1,
            tolerance_a: 0.05,
            tolerance_tau: 0.5,
            max_rhat: 1.01,
            max_divergence_rate: 0.02,
        };
        assert!(recover(&spec, &SamplerConfig::default(), None).is_err());
        assert!(RecoverySpec { n_runs: 10, structure: "banana".into(), ..spec.clone() }.cohort().is_err());
        assert!(RecoverySpec { n_runs: 10, ..spec }.cohort().is_ok());
    }
}
