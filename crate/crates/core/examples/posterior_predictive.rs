//! Fits a small simulated cohort and compares observed condition metrics
//! with their posterior predictive intervals.
//!
//!     cargo run --release --example posterior_predictive

use banditprobe::agents::{simulate_cohort, CohortSpec};
use banditprobe::inference::{fit_hierarchical, posterior_predictive, SamplerConfig};
use banditprobe::metrics::{condition_summary, run_metrics, DEFAULT_WARMUP};
use banditprobe::rw_model::{FitDataset, GroupHyper};
use banditprobe::RewardStructure;

fn main() -> banditprobe::Result<()> {
    let structure = RewardStructure::asymmetric();
    let cohort = CohortSpec {
        hyper: GroupHyper::from_natural(0.25, 2.5, 0.2, 0.2)?,
        n_runs: 30,
        n_trials: 100,
        structure: structure.clone(),
        prime_x: false,
    };
    let runs = simulate_cohort(&cohort, 5)?;
    let logs: Vec<_> = runs.iter().map(|r| r.log.clone()).collect();
    let observed = condition_summary(
        "observed",
        &logs.iter().map(|l| run_metrics(l, &structure, DEFAULT_WARMUP)).collect::<banditprobe::Result<Vec<_>>>()?,
    )?;

    let fit = fit_hierarchical(&FitDataset::from_logs(&logs), &SamplerConfig::default())?;
    let (a, t) = (fit.group_a(), fit.group_tau());
    println!("group A {:.3} [{:.3}, {:.3}], group tau {:.3} [{:.3}, {:.3}]", a.mean, a.ci_low, a.ci_high, t.mean, t.ci_low, t.ci_high);

    let ppc = posterior_predictive(&fit.run_param_draws(), &structure, 200, 100, DEFAULT_WARMUP, 17)?;
    println!("{:<26} {:>9} {:>22}", "metric", "observed", "predictive 95%");
    for interval in &ppc.intervals {
        let Some(obs) = observed.mean(interval.metric) else { continue };
        let inside = interval.ci_low <= obs && obs <= interval.ci_high;
        println!(
            "{:<26} {:>9.3} [{:>9.3}, {:>9.3}] {}",
            interval.metric.as_str(),
            obs,
            interval.ci_low,
            interval.ci_high,
            if inside { "" } else { "outside" }
        );
    }
    Ok(())
}
