//! Sampler behaviour on targets with known answers.

use banditprobe::inference::hierarchical::{GROUP_A, GROUP_TAU};
use banditprobe::inference::{fit_hierarchical, sample, summarize, LogDensity, SamplerConfig};
use banditprobe::rng;
use banditprobe::rw_model::{FitDataset, GroupHyper, RunData};
use banditprobe::agents::{simulate_cohort, CohortSpec};
use banditprobe::RewardStructure;
use rand_distr::{Distribution, Normal, StandardNormal};

/// Independent normals with the given means and scales.
struct Diagonal {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl LogDensity for Diagonal {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn log_density(&self, x: &[f64]) -> banditprobe::Result<f64> {
        Ok(x.iter().zip(&self.mean).zip(&self.sd).map(|((x, m), s)| -0.5 * ((x - m) / s).powi(2)).sum())
    }
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> banditprobe::Result<f64> {
        for i in 0..x.len() {
            grad[i] = -(x[i] - self.mean[i]) / (self.sd[i] * self.sd[i]);
        }
        self.log_density(x)
    }
}

#[test]
fn standard_normal_2d() {
    let target = Diagonal { mean: vec![0.0, 0.0], sd: vec![1.0, 1.0] };
    let draws = sample(&target, &SamplerConfig { master_seed: 1, ..SamplerConfig::default() }).unwrap();
    assert_eq!(draws.total_draws(), 4000);
    for p in summarize(&draws).params {
        assert!(p.mean.abs() <= 0.05, "{p:?}");
        assert!((p.sd - 1.0).abs() <= 0.05, "{p:?}");
        assert!(p.rhat.unwrap() <= 1.01, "{p:?}");
        assert!(p.ess_bulk.unwrap() > 1000.0, "{p:?}");
    }
}

#[test]
fn badly_scaled_target_is_adapted() {
    let target = Diagonal { mean: vec![3.0, -100.0], sd: vec![0.01, 50.0] };
    let cfg = SamplerConfig { master_seed: 2, init_radius: 2.0, ..SamplerConfig::default() };
    let draws = sample(&target, &cfg).unwrap();
    let s = summarize(&draws);
    assert!((s.params[0].mean - 3.0).abs() < 0.002);
    assert!((s.params[0].sd / 0.01 - 1.0).abs() < 0.1);
    assert!((s.params[1].mean + 100.0).abs() < 5.0);
    assert!((s.params[1].sd / 50.0 - 1.0).abs() < 0.1);
    assert_eq!(draws.divergences(), 0);
}

#[test]
fn same_seed_same_draws() {
    let target = Diagonal { mean: vec![1.0], sd: vec![2.0] };
    let cfg = SamplerConfig { n_warmup: 100, n_samples: 50, master_seed: 3, ..SamplerConfig::default() };
    assert_eq!(sample(&target, &cfg).unwrap(), sample(&target, &cfg).unwrap());
    let other = SamplerConfig { master_seed: 4, ..cfg.clone() };
    assert_ne!(sample(&target, &cfg).unwrap().chains, sample(&target, &other).unwrap().chains);
}

/// With every trial masked the posterior is the prior: mu ~ N(0, 1) and
/// sigma ~ HalfNormal(0.2), whose mean is 0.2 * sqrt(2 / pi).
#[test]
fn empty_data_returns_the_prior() {
    let masked = RunData::new(vec![0; 5], vec![0; 5], vec![false; 5]).unwrap();
    let data = FitDataset::new(vec![masked; 3]);
    let cfg = SamplerConfig { master_seed: 5, n_samples: 2000, target_accept: 0.95, ..SamplerConfig::default() };
    let fit = fit_hierarchical(&data, &cfg).unwrap();
    let s = &fit.summary;
    for name in ["mu_a", "mu_tau"] {
        let p = s.get(name).unwrap();
        assert!(p.mean.abs() < 0.1, "{p:?}");
        assert!((p.sd - 1.0).abs() < 0.1, "{p:?}");
    }
    let half_normal_mean = 0.2 * (2.0 / std::f64::consts::PI).sqrt();
    for name in ["sigma_a", "sigma_tau"] {
        let p = s.get(name).unwrap();
        assert!((p.mean - half_normal_mean).abs() < 0.02, "{name}: {} vs {half_normal_mean}", p.mean);
    }
    // Phi of a standard normal is uniform: group A has mean 1/2, group tau 5/2
    assert!((s.get(GROUP_A).unwrap().mean - 0.5).abs() < 0.05);
    assert!((s.get(GROUP_TAU).unwrap().mean - 2.5).abs() < 0.25);
}

/// Hyper-parameters drawn from the prior, small cohorts fitted: the 95%
/// intervals of the group means should cover the truth most of the time.
#[test]
fn interval_coverage_over_prior_draws() {
    let mut r = rng::seeded(606);
    let half = Normal::new(0.0, 0.2).unwrap();
    let cfg = SamplerConfig {
        n_chains: 2,
        n_warmup: 400,
        n_samples: 400,
        target_accept: 0.9,
        max_divergence_rate: 1.0,
        ..SamplerConfig::default()
    };
    let (mut covered, mut total) = (0, 0);
    for rep in 0..20u64 {
        let hyper = GroupHyper {
            mu_a: StandardNormal.sample(&mut r),
            sigma_a: f64::abs(half.sample(&mut r)),
            mu_tau: StandardNormal.sample(&mut r),
            sigma_tau: f64::abs(half.sample(&mut r)),
        };
        let cohort = CohortSpec {
            hyper,
            n_runs: 8,
            n_trials: 60,
            structure: RewardStructure::asymmetric(),
            prime_x: false,
        };
        let logs: Vec<_> = simulate_cohort(&cohort, rep).unwrap().into_iter().map(|c| c.log).collect();
        let fit = fit_hierarchical(&FitDataset::from_logs(&logs), &SamplerConfig { master_seed: rep, ..cfg.clone() })
            .unwrap();
        for (name, truth) in [(GROUP_A, hyper.natural_a()), (GROUP_TAU, hyper.natural_tau())] {
            let p = fit.summary.get(name).unwrap();
            total += 1;
            covered += usize::from(p.ci_low <= truth && truth <= p.ci_high);
        }
    }
    assert!(covered * 10 >= total * 9, "covered {covered} of {total}");
}
