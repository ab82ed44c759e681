//! NUTS on a correlated 2-D Gaussian, with split R-hat and bulk ESS.
//!
//!     cargo run --release --example nuts_gaussian

use banditprobe::inference::{sample, summarize, LogDensity, SamplerConfig};

/// Zero-mean Gaussian with unit variances and correlation `rho`.
struct Correlated {
    rho: f64,
}

impl LogDensity for Correlated {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, x: &[f64]) -> banditprobe::Result<f64> {
        let r = self.rho;
        Ok(-0.5 * (x[0] * x[0] - 2.0 * r * x[0] * x[1] + x[1] * x[1]) / (1.0 - r * r))
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> banditprobe::Result<f64> {
        let r = self.rho;
        let k = 1.0 - r * r;
        grad[0] = -(x[0] - r * x[1]) / k;
        grad[1] = -(x[1] - r * x[0]) / k;
        self.log_density(x)
    }

    fn param_names(&self) -> Vec<String> {
        vec!["x".into(), "y".into()]
    }
}

fn main() -> banditprobe::Result<()> {
    let target = Correlated { rho: 0.9 };
    let draws = sample(&target, &SamplerConfig::default())?;
    for p in &summarize(&draws).params {
        println!(
            "{}: mean {:+.3} sd {:.3} 95% [{:+.3}, {:+.3}] R-hat {:.4} ESS {:.0}",
            p.parameter,
            p.mean,
            p.sd,
            p.ci_low,
            p.ci_high,
            p.rhat.unwrap_or(f64::NAN),
            p.ess_bulk.unwrap_or(f64::NAN)
        );
    }
    let xy = draws.map_chains(|d| d[0] * d[1]);
    let n: usize = xy.iter().map(Vec::len).sum();
    println!("E[xy] = {:.3} (target 0.9)", xy.iter().flatten().sum::<f64>() / n as f64);
    for (c, s) in draws.stats.iter().enumerate() {
        println!("chain {c}: step {:.3}, accept {:.2}, mean depth {:.1}, divergences {}", s.step_size, s.mean_accept_stat, s.mean_tree_depth, s.divergences);
    }
    Ok(())
}
