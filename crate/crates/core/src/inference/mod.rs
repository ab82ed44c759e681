//! Gradient-based MCMC and everything downstream of the draws.

pub mod adapt;
pub mod diagnostics;
pub mod hierarchical;
pub mod icc;
pub mod nuts;
pub mod summary;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use adapt::{DualAveraging, WarmupPhase, WarmupSchedule, WelfordVariance};
use nuts::{find_reasonable_step_size, Integrator, Nuts, PhasePoint};

pub use diagnostics::{ess_bulk, split_rhat};
pub use hierarchical::{
    fit_hierarchical, per_run_loglik, posterior_predictive, split_half_reliability,
    HierarchicalFit, PredictiveSummary, ReliabilityResult,
};
pub use icc::icc31;
pub use summary::{summarize, ParamSummary, PosteriorSummary};

/// A differentiable log density on an unconstrained space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> Result<f64>;

    /// Writes the gradient into `grad` and returns the log density.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64>;

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x[{i}]")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub master_seed: u64,
    /// Post-warmup divergence fraction above which a fit is rejected.
    pub max_divergence_rate: f64,
    /// Half-width of the uniform initialisation jitter.
    pub init_radius: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_warmup: 1000,
            n_samples: 1000,
            target_accept: 0.8,
            max_tree_depth: 10,
            master_seed: 20250101,
            max_divergence_rate: 0.1,
            init_radius: 0.1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::invalid("n_chains must be at least 1"));
        }
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples must be at least 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("target_accept must lie in (0, 1)"));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::invalid("max_tree_depth must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.max_divergence_rate) {
            return Err(Error::invalid("max_divergence_rate must lie in [0, 1]"));
        }
        if !(self.init_radius >= 0.0) {
            return Err(Error::invalid("init_radius must be >= 0"));
        }
        Ok(())
    }

    /// Reads a TOML sampler config. Missing keys take their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-chain sampler statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainStats {
    pub step_size: f64,
    pub divergences: usize,
    pub mean_accept_stat: f64,
    pub mean_tree_depth: f64,
    pub max_tree_depth_hits: usize,
    pub total_leapfrog: usize,
}

/// Post-warmup draws, `n_chains` x `n_samples` x `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    pub names: Vec<String>,
    pub n_samples: usize,
    /// One row-major `n_samples * dim` buffer per chain.
    pub chains: Vec<Vec<f64>>,
    pub stats: Vec<ChainStats>,
}

impl Draws {
    /// Wraps pre-computed chains (e.g. pinned values in tests).
    pub fn from_chains(names: Vec<String>, chains: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let dim = names.len();
        let n_samples = chains.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(chains.len());
        for chain in &chains {
            if chain.len() != n_samples || chain.iter().any(|d| d.len() != dim) {
                return Err(Error::DimensionMismatch("ragged chains".into()));
            }
            flat.push(chain.iter().flatten().copied().collect());
        }
        let stats = vec![ChainStats::default(); chains.len()];
        Ok(Self { names, n_samples, chains: flat, stats })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains() * self.n_samples
    }

    pub fn draw(&self, chain: usize, iteration: usize) -> &[f64] {
        let d = self.dim();
        &self.chains[chain][iteration * d..(iteration + 1) * d]
    }

    /// The `k`-th draw when chains are concatenated in order.
    pub fn flat_draw(&self, k: usize) -> &[f64] {
        self.draw(k / self.n_samples, k % self.n_samples)
    }

    /// Per-chain trace of one parameter.
    pub fn param_chains(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains())
            .map(|c| (0..self.n_samples).map(|i| self.draw(c, i)[param]).collect())
            .collect()
    }

    /// Per-chain trace of a function of the draw.
    pub fn map_chains(&self, f: impl Fn(&[f64]) -> f64) -> Vec<Vec<f64>> {
        (0..self.n_chains())
            .map(|c| (0..self.n_samples).map(|i| f(self.draw(c, i))).collect())
            .collect()
    }

    pub fn divergences(&self) -> usize {
        self.stats.iter().map(|s| s.divergences).sum()
    }

    pub fn divergence_rate(&self) -> f64 {
        if self.total_draws() == 0 {
            0.0
        } else {
            self.divergences() as f64 / self.total_draws() as f64
        }
    }
}

fn initial_point<M: LogDensity + ?Sized>(
    model: &M,
    radius: f64,
    rng: &mut Rng,
) -> Result<PhasePoint> {
    let dim = model.dim();
    let mut last_err = None;
    for _ in 0..10 {
        let q: Vec<f64> =
            (0..dim).map(|_| radius * (2.0 * rng::unit_f64(rng) - 1.0)).collect();
        let mut grad = vec![0.0; dim];
        match model.log_density_grad(&q, &mut grad) {
            Ok(logp) if logp.is_finite() && grad.iter().all(|g| g.is_finite()) => {
                return Ok(PhasePoint { p: vec![0.0; dim], q, grad, logp });
            }
            Ok(logp) => last_err = Some(format!("log density {logp} at initial point")),
            Err(e) => last_err = Some(e.to_string()),
        }
    }
    Err(Error::NumericFailure(format!(
        "no finite initial point after 10 attempts: {}",
        last_err.unwrap_or_default()
    )))
}

fn run_chain<M: LogDensity + ?Sized>(
    model: &M,
    config: &SamplerConfig,
    chain: usize,
) -> Result<(Vec<f64>, ChainStats)> {
    let dim = model.dim();
    let mut rng = rng::seeded(rng::derive_seed(config.master_seed, chain as u64));
    let mut z = initial_point(model, config.init_radius, &mut rng)?;
    let mut inv_metric = vec![1.0; dim];

    let schedule = WarmupSchedule::new(config.n_warmup);
    let mut welford = WelfordVariance::new(dim);
    let mut eps = {
        let integrator = Integrator { model, inv_metric: &inv_metric };
        find_reasonable_step_size(&integrator, &z, 1.0, &mut rng)
    };
    let mut da = DualAveraging::new(config.target_accept, eps);

    for it in 0..schedule.len() {
        let integrator = Integrator { model, inv_metric: &inv_metric };
        let sampler = Nuts { integrator, max_depth: config.max_tree_depth };
        let (next, stats) = sampler.transition(&z, eps, &mut rng)?;
        z = next;
        da.update(stats.accept_stat);
        eps = da.current();
        if let WarmupPhase::Slow { window_end } = schedule.phase(it) {
            welford.add(&z.q);
            if window_end {
                inv_metric = welford.regularized();
                welford.reset();
                let integrator = Integrator { model, inv_metric: &inv_metric };
                eps = find_reasonable_step_size(&integrator, &z, eps, &mut rng);
                da.restart(eps);
            }
        }
    }
    if !schedule.is_empty() {
        eps = da.finalized();
    }

    let integrator = Integrator { model, inv_metric: &inv_metric };
    let sampler = Nuts { integrator, max_depth: config.max_tree_depth };
    let mut out = Vec::with_capacity(config.n_samples * dim);
    let mut stats = ChainStats { step_size: eps, ..Default::default() };
    let mut accept_sum = 0.0;
    let mut depth_sum = 0usize;
    for _ in 0..config.n_samples {
        let (next, s) = sampler.transition(&z, eps, &mut rng)?;
        z = next;
        out.extend_from_slice(&z.q);
        accept_sum += s.accept_stat;
        depth_sum += s.tree_depth;
        stats.divergences += usize::from(s.divergent);
        stats.max_tree_depth_hits += usize::from(s.tree_depth >= config.max_tree_depth);
        stats.total_leapfrog += s.n_leapfrog;
    }
    stats.mean_accept_stat = accept_sum / config.n_samples as f64;
    stats.mean_tree_depth = depth_sum as f64 / config.n_samples as f64;
    Ok((out, stats))
}

/// Draws without the divergence quality gate.
pub fn sample_unchecked<M: LogDensity + ?Sized>(model: &M, config: &SamplerConfig) -> Result<Draws> {
    config.validate()?;
    let results: Vec<Result<(Vec<f64>, ChainStats)>> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(model, config, c))
        .collect();
    let mut chains = Vec::with_capacity(config.n_chains);
    let mut stats = Vec::with_capacity(config.n_chains);
    for r in results {
        let (c, s) = r?;
        chains.push(c);
        stats.push(s);
    }
    Ok(Draws { names: model.param_names(), n_samples: config.n_samples, chains, stats })
}

/// Runs `config.n_chains` NUTS chains in parallel. Chains differ only in
/// their seed, derived from `config.master_seed` and the chain index.
pub fn sample<M: LogDensity + ?Sized>(model: &M, config: &SamplerConfig) -> Result<Draws> {
    let draws = sample_unchecked(model, config)?;
    let rate = draws.divergence_rate();
    if rate > config.max_divergence_rate {
        return Err(Error::FitQuality(format!(
            "{:.1}% of post-warmup transitions diverged (limit {:.1}%)",
            100.0 * rate,
            100.0 * config.max_divergence_rate
        )));
    }
    Ok(draws)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct StdNormal(usize);

    impl LogDensity for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density(&self, x: &[f64]) -> Result<f64> {
            Ok(-0.5 * x.iter().map(|v| v * v).sum::<f64>())
        }
        fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
            for (g, v) in grad.iter_mut().zip(x) {
                *g = -v;
            }
            self.log_density(x)
        }
    }

    struct Broken;

    impl LogDensity for Broken {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, _x: &[f64]) -> Result<f64> {
            Ok(f64::NAN)
        }
        fn log_density_grad(&self, _x: &[f64], _grad: &mut [f64]) -> Result<f64> {
            Ok(f64::NAN)
        }
    }

    fn small() -> SamplerConfig {
        SamplerConfig { n_warmup: 300, n_samples: 300, ..Default::default() }
    }

    #[test]
    fn equal_seeds_equal_draws() {
        let a = sample(&StdNormal(3), &small()).unwrap();
        let b = sample(&StdNormal(3), &small()).unwrap();
        assert_eq!(a.chains, b.chains);
        let c = sample(&StdNormal(3), &SamplerConfig { master_seed: 1, ..small() }).unwrap();
        assert_ne!(a.chains, c.chains);
    }

    #[test]
    fn non_finite_target_fails_at_init() {
        let err = sample(&Broken, &small()).unwrap_err();
        assert!(matches!(err, Error::NumericFailure(_)), "{err}");
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig { n_chains: 0, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { target_accept: 1.0, ..Default::default() }.validate().is_err());
        let cfg = SamplerConfig::from_toml("n_chains = 2\nn_warmup = 50\n").unwrap();
        assert_eq!((cfg.n_chains, cfg.n_warmup, cfg.n_samples), (2, 50, 1000));
        assert!(SamplerConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn adapted_step_is_reasonable() {
        let d = sample(&StdNormal(10), &small()).unwrap();
        for s in &d.stats {
            assert!(s.step_size > 0.2 && s.step_size < 2.0, "{}", s.step_size);
            assert!(s.mean_accept_stat > 0.6, "{}", s.mean_accept_stat);
            assert_eq!(s.divergences, 0);
        }
    }
}
