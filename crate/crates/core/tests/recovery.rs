//! Recovery harness on small cohorts.

use banditprobe::inference::SamplerConfig;
use banditprobe::orchestrator::{recover, RecoverySpec};

fn spec(sigma: f64, n_runs: usize) -> RecoverySpec {
    RecoverySpec {
        group_a: 0.25,
        group_tau: 3.0,
        sigma_a: sigma,
        sigma_tau: sigma,
        n_runs,
        n_trials: 100,
        structure: "asymmetric".into(),
        seed: 31,
        tolerance_a: 0.05,
        tolerance_tau: 0.5,
        max_rhat: 1.01,
        max_divergence_rate: 0.02,
    }
}

fn sd(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[test]
fn homogeneous_cohort_clusters_at_the_group_values() {
    let cfg = SamplerConfig { master_seed: 32, ..SamplerConfig::default() };
    let card = recover(&spec(0.0, 25), &cfg, None).unwrap();
    assert!(card.truth.iter().all(|p| (p.a - 0.25).abs() < 1e-12 && (p.tau - 3.0).abs() < 1e-12));
    let est = card.fit.per_run_means();
    let a: Vec<f64> = est.iter().map(|p| p.a).collect();
    let tau: Vec<f64> = est.iter().map(|p| p.tau).collect();
    assert!(sd(&a) < 0.02, "sd of per-run A means {}", sd(&a));
    assert!(sd(&tau) < 0.2, "sd of per-run tau means {}", sd(&tau));
    for p in &est {
        assert!((p.a - card.fit.group_a().mean).abs() < 0.05);
        assert!((p.tau - card.fit.group_tau().mean).abs() < 0.5);
    }
    assert!(card.row("group_a").unwrap().pass && card.row("group_tau").unwrap().pass);
}

#[test]
fn heterogeneous_cohort_spreads_out() {
    let cfg = SamplerConfig { master_seed: 33, ..SamplerConfig::default() };
    let card = recover(&spec(0.5, 25), &cfg, None).unwrap();
    let est_a: Vec<f64> = card.fit.per_run_means().iter().map(|p| p.a).collect();
    let true_a: Vec<f64> = card.truth.iter().map(|p| p.a).collect();
    // posterior means track the individual truths
    let (ma, mt) = (est_a.iter().sum::<f64>() / 25.0, true_a.iter().sum::<f64>() / 25.0);
    let cov: f64 = est_a.iter().zip(&true_a).map(|(e, t)| (e - ma) * (t - mt)).sum::<f64>() / 24.0;
    let corr = cov / (sd(&est_a) * sd(&true_a));
    assert!(corr > 0.6, "correlation {corr}");
}

#[test]
fn degenerate_cohorts_rejected() {
    let cfg = SamplerConfig::default();
    assert!(recover(&spec(0.1, 0), &cfg, None).is_err());
    assert!(recover(&spec(0.1, 1), &cfg, None).is_err());
    assert!(recover(&RecoverySpec { group_tau: 5.0, ..spec(0.1, 10) }, &cfg, None).is_err());
    assert!(recover(&RecoverySpec { sigma_a: -0.1, ..spec(0.1, 10) }, &cfg, None).is_err());
}
