//! Rescorla-Wagner log-likelihood of one simulated run over a grid of
//! learning rates and inverse temperatures.
//!
//!     cargo run --release --example rw_likelihood

use banditprobe::rw_model::{run_loglik, run_loglik_grad, simulate_run, RWParams, RunData};
use banditprobe::RewardStructure;

fn main() -> banditprobe::Result<()> {
    let truth = RWParams::new(0.3, 2.5)?;
    let sim = simulate_run(truth, &RewardStructure::asymmetric(), 200, 99)?;
    let data = RunData::from_log(&sim.log);

    let a_grid: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
    let tau_grid: Vec<f64> = (1..10).map(|i| i as f64 * 0.5).collect();
    print!("{:>6}", "A\\tau");
    for t in &tau_grid {
        print!("{t:>9.1}");
    }
    println!();
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for &a in &a_grid {
        print!("{a:>6.1}");
        for &tau in &tau_grid {
            let ll = run_loglik(RWParams::new(a, tau)?, &data)?;
            if ll > best.0 {
                best = (ll, a, tau);
            }
            print!("{ll:>9.2}");
        }
        println!();
    }
    println!("grid maximum at A = {}, tau = {} (truth A = {}, tau = {})", best.1, best.2, truth.a, truth.tau);
    let g = run_loglik_grad(truth, &data)?;
    println!("at the truth: loglik {:.4}, d/dA {:.4}, d/dtau {:.4}", g.loglik, g.d_a, g.d_tau);
    Ok(())
}
