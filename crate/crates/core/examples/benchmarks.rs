//! Plays every built-in synthetic agent against both reward presets and
//! prints the condition means next to the reference values.
//!
//!     cargo run --release --example benchmarks

use banditprobe::agents::SyntheticAgent;
use banditprobe::metrics::{self, condition_summary, Metric};
use banditprobe::{rng, session, BanditEnv, RewardStructure};

fn main() -> banditprobe::Result<()> {
    let agents = [
        SyntheticAgent::Random,
        SyntheticAgent::Oracle,
        SyntheticAgent::EpsilonGreedy { epsilon: 0.1 },
        SyntheticAgent::Wsls { first_x: true },
        SyntheticAgent::Rw { a: 0.3, tau: 3.0, prime_x: false },
    ];
    let (n_runs, n_trials) = (200u64, 100usize);
    for structure in [RewardStructure::symmetric(), RewardStructure::asymmetric()] {
        let (ref_reward, ref_target) = metrics::oracle_benchmarks(&structure, n_trials)?;
        println!("{} (reference: reward {ref_reward}, target rate {ref_target})", structure.label);
        for spec in &agents {
            let id = format!("{}__{}", spec.label(), structure.label);
            let cond_seed = rng::condition_seed(42, &id);
            let mut per_run = Vec::new();
            for run_id in 0..n_runs {
                let seed = rng::run_seed(cond_seed, run_id);
                let mut env = BanditEnv::new(structure.clone(), rng::derive_seed(seed, rng::ENV_STREAM));
                let mut agent = spec.build(&structure, rng::derive_seed(seed, rng::AGENT_STREAM))?;
                let log = session::play(agent.as_mut(), &mut env, n_trials, &id, run_id);
                per_run.push(metrics::run_metrics(&log, &structure, metrics::DEFAULT_WARMUP)?);
            }
            let s = condition_summary(&id, &per_run)?;
            let reward = s.get(Metric::TotalReward).expect("always defined");
            println!(
                "  {:<20} reward {:6.2} [{:.2}, {:.2}]  target {:.3}  bias {:+.3}",
                spec.label(),
                reward.mean,
                reward.ci_low,
                reward.ci_high,
                s.mean(Metric::TargetRate).unwrap_or(f64::NAN),
                s.mean(Metric::ChoiceBias).unwrap_or(f64::NAN),
            );
        }
    }
    Ok(())
}
