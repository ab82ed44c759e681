//! Fitting the hierarchical RW model and working with its posterior.

use std::io::Write;

use rayon::prelude::*;

use super::icc::icc31;
use super::summary::{quantile_sorted, ParamSummary, PosteriorSummary};
use super::{sample, Draws, SamplerConfig};
use crate::bandit::RewardStructure;
use crate::error::{Error, Result};
use crate::metrics::{self, Metric, RunMetrics};
use crate::rng;
use crate::rw_model::{
    normal_cdf, run_loglik, simulate_run, FitDataset, HierarchicalModel, ParamLayout, RWParams,
    TAU_MAX,
};

/// Natural-scale group learning rate, `Phi(mu_a)`.
pub const GROUP_A: &str = "group_a";
/// Natural-scale group inverse temperature, `5 Phi(mu_tau)`.
pub const GROUP_TAU: &str = "group_tau";

/// Posterior draws of the hierarchical model plus their summaries.
#[derive(Debug, Clone)]
pub struct HierarchicalFit {
    pub draws: Draws,
    pub layout: ParamLayout,
    /// Unconstrained parameters, then `sigma_a`, `sigma_tau`, `group_a`,
    /// `group_tau`, then `a[i]` and `tau[i]` per run.
    pub summary: PosteriorSummary,
}

impl HierarchicalFit {
    pub fn from_draws(draws: Draws, layout: ParamLayout) -> Result<Self> {
        if draws.dim() != layout.dim() {
            return Err(Error::DimensionMismatch(format!(
                "draws have {} parameters, layout expects {}",
                draws.dim(),
                layout.dim()
            )));
        }
        let mut summary = super::summarize(&draws);
        let derived: [(&str, Box<dyn Fn(&[f64]) -> f64 + Sync>); 4] = [
            ("sigma_a", Box::new(|x: &[f64]| x[ParamLayout::LOG_SIGMA_A].exp())),
            ("sigma_tau", Box::new(|x: &[f64]| x[ParamLayout::LOG_SIGMA_TAU].exp())),
            (GROUP_A, Box::new(|x: &[f64]| normal_cdf(x[ParamLayout::MU_A]))),
            (GROUP_TAU, Box::new(|x: &[f64]| TAU_MAX * normal_cdf(x[ParamLayout::MU_TAU]))),
        ];
        for (name, f) in &derived {
            summary.params.push(ParamSummary::from_chains(name, &draws.map_chains(f)));
        }
        let per_run: Vec<ParamSummary> = (0..layout.n_runs)
            .into_par_iter()
            .flat_map_iter(|i| {
                let a = draws.map_chains(|x| layout.run_params(x, i).a);
                let tau = draws.map_chains(|x| layout.run_params(x, i).tau);
                [
                    ParamSummary::from_chains(&format!("a[{i}]"), &a),
                    ParamSummary::from_chains(&format!("tau[{i}]"), &tau),
                ]
            })
            .collect();
        summary.params.extend(per_run);
        Ok(Self { draws, layout, summary })
    }

    pub fn group_a(&self) -> &ParamSummary {
        self.summary.get(GROUP_A).expect("group_a is always summarized")
    }

    pub fn group_tau(&self) -> &ParamSummary {
        self.summary.get(GROUP_TAU).expect("group_tau is always summarized")
    }

    /// Pooled natural-scale group tau draws.
    pub fn group_tau_draws(&self) -> Vec<f64> {
        self.draws
            .map_chains(|x| TAU_MAX * normal_cdf(x[ParamLayout::MU_TAU]))
            .concat()
    }

    /// Largest R-hat over hyper-parameters, natural-scale group means and
    /// per-run `(a, tau)`. The raw latents are left out: they are a
    /// reparameterization of the per-run values.
    pub fn max_rhat(&self) -> Option<f64> {
        self.summary
            .params
            .iter()
            .filter(|p| !p.parameter.starts_with("z_"))
            .filter_map(|p| p.rhat)
            .reduce(f64::max)
    }

    pub fn divergence_rate(&self) -> f64 {
        self.draws.divergence_rate()
    }

    /// Posterior mean `(a_i, tau_i)` of every run.
    pub fn per_run_means(&self) -> Vec<RWParams> {
        (0..self.layout.n_runs)
            .map(|i| RWParams {
                a: self.summary.get(&format!("a[{i}]")).map_or(f64::NAN, |p| p.mean),
                tau: self.summary.get(&format!("tau[{i}]")).map_or(f64::NAN, |p| p.mean),
            })
            .collect()
    }

    /// Implied per-run parameters of every draw, chains concatenated.
    pub fn run_param_draws(&self) -> Vec<Vec<RWParams>> {
        (0..self.draws.total_draws())
            .map(|k| {
                let x = self.draws.flat_draw(k);
                (0..self.layout.n_runs).map(|i| self.layout.run_params(x, i)).collect()
            })
            .collect()
    }

    /// Long-format draws: `chain, iteration, parameter, value`.
    pub fn write_draws_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["chain", "iteration", "parameter", "value"])?;
        for c in 0..self.draws.n_chains() {
            for it in 0..self.draws.n_samples {
                for (name, v) in self.draws.names.iter().zip(self.draws.draw(c, it)) {
                    wtr.write_record([&c.to_string(), &it.to_string(), name, &v.to_string()])?;
                }
            }
        }
        wtr.flush().map_err(|e| Error::io("<draws>", e))?;
        Ok(())
    }
}

/// Samples the hierarchical posterior of `data`.
pub fn fit_hierarchical(data: &FitDataset, config: &SamplerConfig) -> Result<HierarchicalFit> {
    if data.n_runs() < 2 {
        return Err(Error::invalid(format!(
            "a hierarchical fit needs at least 2 runs, got {}",
            data.n_runs()
        )));
    }
    let model = HierarchicalModel::new(data.clone());
    let draws = sample(&model, config)?;
    log::info!(
        "fit of {} runs: {} divergences, step sizes {:?}",
        data.n_runs(),
        draws.divergences(),
        draws.stats.iter().map(|s| s.step_size).collect::<Vec<_>>()
    );
    HierarchicalFit::from_draws(draws, model.layout())
}

/// Log-likelihood of every run under every draw, `draws x runs`.
pub fn per_run_loglik(param_draws: &[Vec<RWParams>], data: &FitDataset) -> Result<Vec<Vec<f64>>> {
    param_draws
        .par_iter()
        .map(|params| {
            if params.len() != data.n_runs() {
                return Err(Error::DimensionMismatch(format!(
                    "draw has {} runs, data has {}",
                    params.len(),
                    data.n_runs()
                )));
            }
            params.iter().zip(&data.runs).map(|(&p, run)| run_loglik(p, run)).collect()
        })
        .collect()
}

/// Distribution of one condition-level metric over replicated datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveInterval {
    pub metric: Metric,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Condition mean of the metric in each replicate.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictiveSummary {
    /// Per replicate, the metrics of every simulated run.
    pub replicates: Vec<Vec<RunMetrics>>,
    pub intervals: Vec<PredictiveInterval>,
}

impl PredictiveSummary {
    pub fn n_draws(&self) -> usize {
        self.replicates.len()
    }

    pub fn get(&self, metric: Metric) -> Option<&PredictiveInterval> {
        self.intervals.iter().find(|p| p.metric == metric)
    }
}

/// Simulates one replicated dataset per selected draw (draws evenly spaced
/// over the chains) and summarizes condition-level metrics across them.
pub fn posterior_predictive(
    param_draws: &[Vec<RWParams>],
    structure: &RewardStructure,
    n_draws: usize,
    n_trials: usize,
    warmup: usize,
    seed: u64,
) -> Result<PredictiveSummary> {
    if n_draws > param_draws.len() {
        return Err(Error::invalid(format!(
            "requested {n_draws} predictive draws from {} posterior draws",
            param_draws.len()
        )));
    }
    if n_draws == 0 {
        return Ok(PredictiveSummary::default());
    }
    let total = param_draws.len();
    let replicates: Vec<Vec<RunMetrics>> = (0..n_draws)
        .into_par_iter()
        .map(|k| {
            let draw_seed = rng::derive_seed(seed, k as u64);
            param_draws[k * total / n_draws]
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let sim = simulate_run(p, structure, n_trials, rng::run_seed(draw_seed, i as u64))?;
                    metrics::run_metrics(&sim.log, structure, warmup)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let intervals = Metric::ALL
        .iter()
        .filter_map(|&m| {
            let values: Vec<f64> = replicates
                .iter()
                .filter_map(|runs| {
                    let v: Vec<f64> = runs.iter().filter_map(|r| m.per_run(r)).collect();
                    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                })
                .collect();
            if values.is_empty() {
                return None;
            }
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            Some(PredictiveInterval {
                metric: m,
                mean: values.iter().sum::<f64>() / values.len() as f64,
                ci_low: quantile_sorted(&sorted, 0.025),
                ci_high: quantile_sorted(&sorted, 0.975),
                values,
            })
        })
        .collect();
    Ok(PredictiveSummary { replicates, intervals })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityResult {
    pub icc_a: f64,
    pub icc_tau: f64,
    pub n_subjects: usize,
    pub k: usize,
    /// Per-run posterior means from the first and second half.
    pub halves: [Vec<RWParams>; 2],
}

/// Fits first and second halves of every run separately and correlates the
/// per-run posterior means with ICC(3,1).
pub fn split_half_reliability(data: &FitDataset, config: &SamplerConfig) -> Result<ReliabilityResult> {
    let n_trials = data.runs.first().map_or(0, |r| r.len());
    if data.runs.iter().any(|r| r.len() != n_trials) {
        return Err(Error::invalid("split-half reliability needs runs of equal length"));
    }
    if n_trials == 0 || n_trials % 2 != 0 {
        return Err(Error::invalid(format!("split-half reliability needs an even T, got {n_trials}")));
    }
    let half = n_trials / 2;
    let first = FitDataset::new(data.runs.iter().map(|r| r.slice(0..half)).collect());
    let second = FitDataset::new(data.runs.iter().map(|r| r.slice(half..n_trials)).collect());
    let m1 = fit_hierarchical(&first, config)?.per_run_means();
    let second_config = SamplerConfig { master_seed: rng::derive_seed(config.master_seed, 2), ..config.clone() };
    let m2 = fit_hierarchical(&second, &second_config)?.per_run_means();

    let rows = |f: fn(&RWParams) -> f64| -> Vec<Vec<f64>> {
        m1.iter().zip(&m2).map(|(x, y)| vec![f(x), f(y)]).collect()
    };
    Ok(ReliabilityResult {
        icc_a: icc31(&rows(|p| p.a))?,
        icc_tau: icc31(&rows(|p| p.tau))?,
        n_subjects: data.n_runs(),
        k: 2,
        halves: [m1, m2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rw_model::RunData;

    fn pinned(n_draws: usize, n_runs: usize, p: RWParams) -> Vec<Vec<RWParams>> {
        vec![vec![p; n_runs]; n_draws]
    }

    #[test]
    fn flat_policy_loglik() {
        let data = FitDataset::new(vec![
            RunData::new(vec![0, 1, 1], vec![1, 0, 1], vec![true, false, true]).unwrap(),
            RunData::new(vec![1; 4], vec![0; 4], vec![false; 4]).unwrap(),
        ]);
        let ll = per_run_loglik(&pinned(3, 2, RWParams { a: 0.4, tau: 0.0 }), &data).unwrap();
        for row in ll {
            assert_eq!(row[0], 2.0 * 0.5f64.ln());
            assert_eq!(row[1], 0.0);
        }
    }

    #[test]
    fn predictive_at_flat_policy() {
        let s = RewardStructure::asymmetric();
        let pp = posterior_predictive(&pinned(40, 30, RWParams { a: 0.3, tau: 0.0 }), &s, 40, 100, 10, 1)
            .unwrap();
        let tr = pp.get(Metric::TargetRate).unwrap();
        assert!((tr.mean - 0.5).abs() < 0.01, "{}", tr.mean);
        assert!(tr.ci_low < 0.5 && tr.ci_high > 0.5);
    }

    #[test]
    fn predictive_edge_cases() {
        let d = pinned(5, 2, RWParams { a: 0.3, tau: 1.0 });
        let s = RewardStructure::symmetric();
        assert_eq!(posterior_predictive(&d, &s, 0, 100, 10, 1).unwrap().n_draws(), 0);
        assert!(posterior_predictive(&d, &s, 6, 100, 10, 1).is_err());
        let a = posterior_predictive(&d, &s, 5, 50, 10, 9).unwrap();
        let b = posterior_predictive(&d, &s, 5, 50, 10, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn odd_or_single_inputs_rejected() {
        let cfg = SamplerConfig::default();
        let odd = FitDataset::new(vec![RunData::new(vec![0; 3], vec![0; 3], vec![true; 3]).unwrap(); 3]);
        assert!(split_half_reliability(&odd, &cfg).is_err());
        let one = FitDataset::new(vec![RunData::new(vec![0; 4], vec![0; 4], vec![true; 4]).unwrap()]);
        assert!(fit_hierarchical(&one, &cfg).is_err());
    }

    #[test]
    fn natural_scale_columns() {
        let layout = ParamLayout { n_runs: 2 };
        let x = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let draws = Draws::from_chains(layout.names(), vec![vec![x.clone(); 10], vec![x; 10]]).unwrap();
        let fit = HierarchicalFit::from_draws(draws, layout).unwrap();
        assert_eq!(fit.group_a().mean, 0.5);
        assert_eq!(fit.group_tau().mean, 2.5);
        assert_eq!(fit.per_run_means(), vec![RWParams { a: 0.5, tau: 2.5 }; 2]);
        assert_eq!(fit.summary.get("sigma_a").unwrap().mean, 1.0);
        let mut buf = Vec::new();
        fit.write_draws_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("chain,iteration,parameter,value\n0,0,mu_a,0\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 10 * 8);
    }
}
