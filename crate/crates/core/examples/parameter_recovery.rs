//! Simulate a Rescorla-Wagner cohort, fit the hierarchical model, and check
//! that the natural-scale group means come back.
//!
//!     cargo run --release --example parameter_recovery -- [n_runs] [n_trials]

use std::time::Instant;

use banditprobe::inference::SamplerConfig;
use banditprobe::orchestrator::{recover, RecoverySpec};

fn main() -> banditprobe::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n_runs = args.first().copied().unwrap_or(50);
    let n_trials = args.get(1).copied().unwrap_or(100);

    let spec = RecoverySpec {
        group_a: 0.2,
        group_tau: 3.0,
        sigma_a: 0.1,
        sigma_tau: 0.1,
        n_runs,
        n_trials,
        structure: "asymmetric".into(),
        seed: 2024,
        tolerance_a: 0.05,
        tolerance_tau: 0.5,
        max_rhat: 1.01,
        max_divergence_rate: 0.02,
    };
    let start = Instant::now();
    let card = recover(&spec, &SamplerConfig::default(), None)?;
    println!("{n_runs} runs x {n_trials} trials, fitted in {:.1?}", start.elapsed());
    for r in &card.rows {
        println!("{:<16} truth {:>7.3}  estimate {:>7.3}  {}", r.quantity, r.truth, r.estimate, if r.pass { "ok" } else { "FAIL" });
    }
    for s in &card.fit.draws.stats {
        println!(
            "  chain: step {:.3}, mean depth {:.1}, accept {:.2}, divergences {}",
            s.step_size, s.mean_tree_depth, s.mean_accept_stat, s.divergences
        );
    }
    let mean_true_a = card.truth.iter().map(|p| p.a).sum::<f64>() / card.truth.len() as f64;
    println!("mean of the simulated per-run A: {mean_true_a:.3}");
    Ok(())
}
