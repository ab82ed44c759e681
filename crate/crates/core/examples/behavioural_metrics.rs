//! Run-level and condition-level indices for a few handcrafted runs.
//!
//!     cargo run --example behavioural_metrics

use banditprobe::agents::Choice::{Invalid, X, Y};
use banditprobe::metrics::{condition_summary, run_metrics, write_summary_csv};
use banditprobe::session::RunLog;
use banditprobe::RewardStructure;

fn main() -> banditprobe::Result<()> {
    let s = RewardStructure::symmetric();
    let runs = [
        // three losses, one switch
        vec![(X, 0), (X, 0), (Y, 0), (Y, 1)],
        // an invalid token breaks the pair it sits in
        vec![(X, 0), (Invalid, 0), (Y, 0), (Y, 0), (X, 1)],
        // settles on X after the second trial
        vec![(Y, 0), (X, 1), (X, 0), (X, 0), (X, 1), (X, 0)],
    ];
    let mut per_run = Vec::new();
    for (i, pairs) in runs.iter().enumerate() {
        let mut log = RunLog::from_pairs(s.clone(), pairs);
        log.run_id = i as u64;
        let m = run_metrics(&log, &s, 2)?;
        println!(
            "run {i}: reward {}, loss-shift {:?}, win-shift {:?}, c-bar {:?}, monomorphic after warm-up {}",
            m.total_reward, m.loss_shift, m.win_shift, m.c_bar, m.post_warmup_monomorphic
        );
        per_run.push(m);
    }
    let summary = condition_summary("handcrafted", &per_run)?;
    println!(
        "stubbornness {:?}, rigidity {:?}, amplification {}, invalid rate {:.3}",
        summary.stubbornness_rate, summary.rigidity_index, summary.amplification_index, summary.invalid_rate
    );
    write_summary_csv(std::io::stdout().lock(), &[summary])
}
