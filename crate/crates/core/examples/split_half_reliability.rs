//! Split-half reliability of per-run posterior means, for a cohort with real
//! between-run spread and for one where every run shares the same values.
//!
//!     cargo run --release --example split_half_reliability

use banditprobe::agents::{simulate_cohort, CohortSpec};
use banditprobe::inference::{icc31, split_half_reliability, SamplerConfig};
use banditprobe::rw_model::{FitDataset, GroupHyper};
use banditprobe::RewardStructure;

fn main() -> banditprobe::Result<()> {
    let table = vec![vec![9.0, 2.0, 5.0, 8.0], vec![6.0, 1.0, 3.0, 2.0], vec![8.0, 4.0, 6.0, 8.0]];
    println!("ICC(3,1) of a 3 x 4 ratings table: {:.4}", icc31(&table)?);

    for (label, sigma) in [("spread", 0.6), ("no spread", 0.0)] {
        let cohort = CohortSpec {
            hyper: GroupHyper::from_natural(0.3, 2.5, sigma, sigma)?,
            n_runs: 40,
            n_trials: 200,
            structure: RewardStructure::asymmetric(),
            prime_x: false,
        };
        let logs: Vec<_> = simulate_cohort(&cohort, 3)?.into_iter().map(|r| r.log).collect();
        let rel = split_half_reliability(&FitDataset::from_logs(&logs), &SamplerConfig::default())?;
        println!("{label:<10} ICC(A) {:+.3}  ICC(tau) {:+.3}  ({} runs, 2 halves)", rel.icc_a, rel.icc_tau, rel.n_subjects);
    }
    Ok(())
}
