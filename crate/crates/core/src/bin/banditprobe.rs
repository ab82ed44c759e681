//! Command-line front end. Exit codes: 0 success, 1 validation error,
//! 2 runtime or provider failure, 3 fit-quality failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use banditprobe::inference::SamplerConfig;
use banditprobe::orchestrator::{self, plan::ExperimentPlan, FitOptions, RecoverySpec, RunOptions};
use banditprobe::{Error, Result};

#[derive(Parser)]
#[command(name = "banditprobe", version, about = "Two-arm bandit probes: run, fit, report, recover, reliability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment plan and write run logs plus condition summaries.
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the plan's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the plan's warm-up window (trials).
        #[arg(long)]
        warmup: Option<usize>,
        /// Request cap per LLM agent.
        #[arg(long)]
        max_requests: Option<usize>,
    },
    /// Fit the hierarchical model to run logs, one fit per condition.
    Fit {
        /// Run-log CSV files or directories holding them.
        #[arg(long, required = true, num_args = 1..)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Only fit this reward structure.
        #[arg(long)]
        structure: Option<String>,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long, default_value_t = 100)]
        ppc_draws: usize,
        #[arg(long)]
        no_draws: bool,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Consolidate summary, posterior and reliability CSVs.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a synthetic cohort, fit it and score recovery.
    Recover {
        /// TOML cohort file; flags below are ignored when given.
        #[arg(long)]
        cohort: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        group_a: f64,
        #[arg(long, default_value_t = 3.0)]
        group_tau: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma_a: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma_tau: f64,
        #[arg(long, default_value_t = 200)]
        n_runs: usize,
        #[arg(long, default_value_t = 100)]
        n_trials: usize,
        #[arg(long, default_value = "asymmetric")]
        structure: String,
        #[arg(long, default_value_t = 0)]
        cohort_seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Split-half ICC(3,1) of per-run posterior means.
    Reliability {
        #[arg(long, required = true, num_args = 1..)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        structure: Option<String>,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
}

#[derive(Args)]
struct SamplerArgs {
    /// TOML sampler config; flags override its values.
    #[arg(long)]
    sampler_config: Option<PathBuf>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup_iters: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    target_accept: Option<f64>,
    #[arg(long)]
    max_tree_depth: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SamplerArgs {
    fn resolve(&self) -> Result<SamplerConfig> {
        let mut cfg = match &self.sampler_config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                SamplerConfig::from_toml(&text)?
            }
            None => SamplerConfig::default(),
        };
        if let Some(v) = self.chains {
            cfg.n_chains = v;
        }
        if let Some(v) = self.warmup_iters {
            cfg.n_warmup = v;
        }
        if let Some(v) = self.samples {
            cfg.n_samples = v;
        }
        if let Some(v) = self.target_accept {
            cfg.target_accept = v;
        }
        if let Some(v) = self.max_tree_depth {
            cfg.max_tree_depth = v;
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { plan, out, seed, warmup, max_requests } => {
            let mut p = ExperimentPlan::from_file(&plan)?;
            if let Some(s) = seed {
                p.master_seed = s;
            }
            if let Some(w) = warmup {
                p.warmup = w;
            }
            let outcome = orchestrator::run(&p, &out, &RunOptions { max_requests })?;
            for c in &outcome.conditions {
                let s = &c.summary;
                println!(
                    "{:<40} reward {:>6.2}  target {:.3}  invalid {:.4}{}",
                    c.condition_id,
                    s.mean(banditprobe::metrics::Metric::TotalReward).unwrap_or(f64::NAN),
                    s.mean(banditprobe::metrics::Metric::TargetRate).unwrap_or(f64::NAN),
                    s.invalid_rate,
                    if c.skipped { "  (existing log)" } else { "" }
                );
            }
            println!("summary: {}", outcome.summary_path.display());
        }
        Command::Fit { logs, out, structure, warmup, ppc_draws, no_draws, sampler } => {
            let opts = FitOptions { structure, sampler: sampler.resolve()?, warmup, ppc_draws, write_draws: !no_draws };
            for f in orchestrator::fit(&logs, &out, &opts)? {
                let (a, t) = (f.fit.group_a(), f.fit.group_tau());
                println!(
                    "{}: group A {:.3} [{:.3}, {:.3}], group tau {:.3} [{:.3}, {:.3}], max R-hat {:.3}, divergences {:.2}% -> {}",
                    f.condition_id,
                    a.mean,
                    a.ci_low,
                    a.ci_high,
                    t.mean,
                    t.ci_low,
                    t.ci_high,
                    f.fit.max_rhat().unwrap_or(f64::NAN),
                    100.0 * f.fit.divergence_rate(),
                    f.dir.display()
                );
            }
        }
        Command::Report { inputs, out } => {
            for f in orchestrator::report(&inputs, &out)?.files {
                println!("{}", f.display());
            }
        }
        Command::Recover {
            cohort,
            group_a,
            group_tau,
            sigma_a,
            sigma_tau,
            n_runs,
            n_trials,
            structure,
            cohort_seed,
            out,
            sampler,
        } => {
            let spec = match cohort {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    toml::from_str::<RecoverySpec>(&text).map_err(|e| Error::Config(e.to_string()))?
                }
                None => RecoverySpec {
                    group_a,
                    group_tau,
                    sigma_a,
                    sigma_tau,
                    n_runs,
                    n_trials,
                    structure,
                    seed: cohort_seed,
                    tolerance_a: 0.05,
                    tolerance_tau: 0.5,
                    max_rhat: 1.01,
                    max_divergence_rate: 0.02,
                },
            };
            let card = orchestrator::recover(&spec, &sampler.resolve()?, Some(&out))?;
            for r in &card.rows {
                println!(
                    "{:<16} truth {:>8.4}  estimate {:>8.4}  tol {:.3}  {}",
                    r.quantity,
                    r.truth,
                    r.estimate,
                    r.tolerance,
                    if r.pass { "PASS" } else { "FAIL" }
                );
            }
            if !card.passed() {
                eprintln!("recovery failed its tolerances");
                return Ok(ExitCode::from(3));
            }
        }
        Command::Reliability { logs, out, structure, sampler } => {
            let results = orchestrator::reliability(&logs, &out, structure.as_deref(), &sampler.resolve()?)?;
            for (id, r) in results {
                println!("{id}: ICC(A) {:.3}  ICC(tau) {:.3}  n = {}", r.icc_a, r.icc_tau, r.n_subjects);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
