//! Runs a plan file end to end: run logs, summaries, one fit and a report.
//!
//!     cargo run --release --example experiment_plan -- [out_dir]

use std::path::{Path, PathBuf};

use banditprobe::inference::SamplerConfig;
use banditprobe::orchestrator::{self, plan::ExperimentPlan, FitOptions, RunOptions};

fn main() -> banditprobe::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("banditprobe-plan"), PathBuf::from);
    let plan_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/plan.toml");
    let plan = ExperimentPlan::from_file(&plan_path)?;
    for c in plan.conditions()? {
        println!("condition {}", c.condition_id);
    }

    let outcome = orchestrator::run(&plan, &out, &RunOptions::default())?;
    for c in &outcome.conditions {
        println!(
            "{:<36} stubbornness {:.2}  rigidity {:.2}  invalid {:.3}{}",
            c.condition_id,
            c.summary.stubbornness_rate.unwrap_or(f64::NAN),
            c.summary.rigidity_index.unwrap_or(f64::NAN),
            c.summary.invalid_rate,
            if c.skipped { "  (reused)" } else { "" }
        );
    }

    let rw_log = outcome
        .conditions
        .iter()
        .find(|c| c.condition_id.starts_with("rw_") && c.condition_id.ends_with("asymmetric"))
        .map(|c| c.log_path.clone())
        .expect("plan has an RW condition");
    let fit_opts = FitOptions {
        structure: None,
        sampler: SamplerConfig { n_warmup: 500, n_samples: 500, ..SamplerConfig::default() },
        warmup: plan.warmup,
        ppc_draws: 50,
        write_draws: false,
    };
    let fits = orchestrator::fit(&[rw_log], &out, &fit_opts)?;
    let posterior = fits[0].dir.join("posterior_summary.csv");

    let report = orchestrator::report(&[outcome.summary_path.clone(), posterior], &out.join("report"))?;
    for f in report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
