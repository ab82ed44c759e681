//! Hierarchical Rescorla-Wagner / softmax model.
//!
//! Per run `i` the learning rate and inverse temperature are probit
//! transforms of group-level normals, written non-centered:
//!
//! ```text
//! a_i   = Phi(mu_a   + sigma_a   * z_a[i])
//! tau_i = 5 * Phi(mu_tau + sigma_tau * z_tau[i])
//! z ~ Normal(0, 1),  mu ~ Normal(0, 1),  sigma ~ HalfNormal(0, 0.2)
//! ```
//!
//! Values start at zero. On each valid trial the choice probability is
//! `P(Y) = logistic(tau * (V_Y - V_X))`, then the chosen arm moves toward the
//! reward by a fraction `a`. Invalid trials are masked: no likelihood and no
//! update.
//!
//! The sampler works on the unconstrained vector
//! `(mu_a, log sigma_a, mu_tau, log sigma_tau, z_a[0..N], z_tau[0..N])`,
//! see [`ParamLayout`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf;

use crate::agents::{Choice, RwAgent};
use crate::bandit::{BanditEnv, RewardStructure};
use crate::error::{Error, Result};
use crate::inference::LogDensity;
use crate::rng;
use crate::session::{self, RunLog};

/// Upper bound of the inverse temperature on the natural scale.
pub const TAU_MAX: f64 = 5.0;
/// Scale of the half-normal prior on both group scales.
pub const SIGMA_PRIOR_SCALE: f64 = 0.2;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const UPPER_OPEN: f64 = 1.0 - f64::EPSILON / 2.0;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal quantile, polished with Newton steps on [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    let mut x = Normal::standard().inverse_cdf(p);
    if x.is_finite() {
        for _ in 0..2 {
            let d = normal_pdf(x);
            if d <= 0.0 {
                break;
            }
            x -= (normal_cdf(x) - p) / d;
        }
    }
    x
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(logistic(x))` without overflow.
pub fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Probit squashing into the open unit interval.
fn probit_open(x: f64) -> f64 {
    normal_cdf(x).clamp(f64::MIN_POSITIVE, UPPER_OPEN)
}

/// Learning rate and inverse temperature of a single run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RWParams {
    pub a: f64,
    pub tau: f64,
}

impl RWParams {
    pub fn new(a: f64, tau: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::invalid(format!("learning rate {a} outside (0, 1)")));
        }
        if !(0.0..=TAU_MAX).contains(&tau) {
            return Err(Error::invalid(format!("inverse temperature {tau} outside [0, 5]")));
        }
        Ok(Self { a, tau })
    }
}

/// Group-level locations and scales on the probit scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupHyper {
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mu_tau: f64,
    pub sigma_tau: f64,
}

impl GroupHyper {
    /// Hyper-parameters whose group location maps to natural-scale `a` and `tau`.
    pub fn from_natural(a: f64, tau: f64, sigma_a: f64, sigma_tau: f64) -> Result<Self> {
        let p = RWParams::new(a, tau)?;
        if !(tau > 0.0 && tau < TAU_MAX) {
            return Err(Error::invalid(format!("group tau {tau} must lie strictly inside (0, 5)")));
        }
        let hyper = Self {
            mu_a: normal_quantile(p.a),
            sigma_a,
            mu_tau: normal_quantile(p.tau / TAU_MAX),
            sigma_tau,
        };
        hyper.validate()?;
        Ok(hyper)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_a.is_finite() && self.mu_tau.is_finite()) {
            return Err(Error::invalid("group means must be finite"));
        }
        for (name, s) in [("sigma_a", self.sigma_a), ("sigma_tau", self.sigma_tau)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::invalid(format!("{name} = {s} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// `Phi(mu_a)`.
    pub fn natural_a(&self) -> f64 {
        normal_cdf(self.mu_a)
    }

    /// `5 * Phi(mu_tau)`.
    pub fn natural_tau(&self) -> f64 {
        TAU_MAX * normal_cdf(self.mu_tau)
    }
}

pub fn transform(hyper: &GroupHyper, z_a: f64, z_tau: f64) -> RWParams {
    RWParams {
        a: probit_open(hyper.mu_a + hyper.sigma_a * z_a),
        tau: TAU_MAX * probit_open(hyper.mu_tau + hyper.sigma_tau * z_tau),
    }
}

/// Per-run standard-normal offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector {
    pub z_a: Vec<f64>,
    pub z_tau: Vec<f64>,
}

impl LatentVector {
    pub fn zeros(n: usize) -> Self {
        Self { z_a: vec![0.0; n], z_tau: vec![0.0; n] }
    }
}

/// One run's observations. `choices` holds 0 for X and 1 for Y; masked
/// trials are ignored by the likelihood whatever their choice/reward.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunData {
    pub choices: Vec<u8>,
    pub rewards: Vec<u8>,
    pub valid: Vec<bool>,
}

impl RunData {
    pub fn new(choices: Vec<u8>, rewards: Vec<u8>, valid: Vec<bool>) -> Result<Self> {
        if choices.len() != rewards.len() || choices.len() != valid.len() {
            return Err(Error::DimensionMismatch(format!(
                "run arrays differ in length: choices {}, rewards {}, valid {}",
                choices.len(),
                rewards.len(),
                valid.len()
            )));
        }
        if choices.iter().chain(&rewards).any(|&v| v > 1) {
            return Err(Error::invalid("choices and rewards must be 0 or 1"));
        }
        Ok(Self { choices, rewards, valid })
    }

    pub fn from_log(log: &RunLog) -> Self {
        let mut d = RunData::default();
        for t in &log.trials {
            d.choices.push(u8::from(t.choice == Choice::Y));
            d.rewards.push(if t.choice.is_valid() { t.reward } else { 0 });
            d.valid.push(t.choice.is_valid());
        }
        d
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Trials `range` of this run as a new run (values restart at zero).
    pub fn slice(&self, range: std::ops::Range<usize>) -> RunData {
        RunData {
            choices: self.choices[range.clone()].to_vec(),
            rewards: self.rewards[range.clone()].to_vec(),
            valid: self.valid[range].to_vec(),
        }
    }
}

/// All runs of one fit (one reward structure / condition).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FitDataset {
    pub runs: Vec<RunData>,
}

impl FitDataset {
    pub fn new(runs: Vec<RunData>) -> Self {
        Self { runs }
    }

    pub fn from_logs<'a>(logs: impl IntoIterator<Item = &'a RunLog>) -> Self {
        Self { runs: logs.into_iter().map(RunData::from_log).collect() }
    }

    pub fn n_runs(&self) -> usize {
        self.runs.len()
    }
}

/// Log-likelihood of one run and its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLikelihood {
    pub loglik: f64,
    pub d_a: f64,
    pub d_tau: f64,
}

pub fn run_loglik(params: RWParams, run: &RunData) -> Result<f64> {
    let mut v = [0.0f64; 2];
    let mut ll = 0.0;
    for t in 0..run.len() {
        if !run.valid[t] {
            continue;
        }
        let c = usize::from(run.choices[t]);
        let x = params.tau * (v[1] - v[0]);
        ll += if c == 1 { log_logistic(x) } else { log_logistic(-x) };
        let r = f64::from(run.rewards[t]);
        v[c] += params.a * (r - v[c]);
    }
    if !ll.is_finite() {
        return Err(Error::NumericFailure(format!("run log-likelihood is {ll}")));
    }
    Ok(ll)
}

/// Log-likelihood plus derivatives with respect to `a` and `tau`.
///
/// The value sensitivities are carried forward alongside the values:
/// `dV'/da = (r - V) + (1 - a) dV/da` on the chosen arm.
pub fn run_loglik_grad(params: RWParams, run: &RunData) -> Result<RunLikelihood> {
    let RWParams { a, tau } = params;
    let mut v = [0.0f64; 2];
    let mut dv = [0.0f64; 2];
    let (mut ll, mut d_a, mut d_tau) = (0.0, 0.0, 0.0);
    for t in 0..run.len() {
        if !run.valid[t] {
            continue;
        }
        let c = usize::from(run.choices[t]);
        let diff = v[1] - v[0];
        let x = tau * diff;
        let y = f64::from(run.choices[t]);
        ll += if c == 1 { log_logistic(x) } else { log_logistic(-x) };
        // d/dx log p(choice) = y - P(Y)
        let resid = y - logistic(x);
        d_tau += resid * diff;
        d_a += resid * tau * (dv[1] - dv[0]);

        let r = f64::from(run.rewards[t]);
        dv[c] = (r - v[c]) + (1.0 - a) * dv[c];
        v[c] += a * (r - v[c]);
    }
    if !(ll.is_finite() && d_a.is_finite() && d_tau.is_finite()) {
        return Err(Error::NumericFailure(format!(
            "non-finite likelihood terms (ll {ll}, d_a {d_a}, d_tau {d_tau})"
        )));
    }
    Ok(RunLikelihood { loglik: ll, d_a, d_tau })
}

fn std_normal_lpdf(x: f64) -> f64 {
    -0.5 * (x * x + LN_2PI)
}

/// Half-normal(0, 0.2) log density of `sigma = exp(log_sigma)` plus the
/// log-Jacobian `log_sigma`, and its derivative in `log_sigma`.
fn scale_prior(log_sigma: f64) -> (f64, f64) {
    let sigma = log_sigma.exp();
    let s = sigma / SIGMA_PRIOR_SCALE;
    let lp = std::f64::consts::LN_2 - SIGMA_PRIOR_SCALE.ln() - 0.5 * LN_2PI - 0.5 * s * s
        + log_sigma;
    (lp, 1.0 - s * s)
}

/// Index map of the unconstrained parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub n_runs: usize,
}

impl ParamLayout {
    pub const MU_A: usize = 0;
    pub const LOG_SIGMA_A: usize = 1;
    pub const MU_TAU: usize = 2;
    pub const LOG_SIGMA_TAU: usize = 3;

    pub fn dim(&self) -> usize {
        4 + 2 * self.n_runs
    }

    pub fn z_a(&self, i: usize) -> usize {
        4 + i
    }

    pub fn z_tau(&self, i: usize) -> usize {
        4 + self.n_runs + i
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> =
            ["mu_a", "log_sigma_a", "mu_tau", "log_sigma_tau"].iter().map(|s| s.to_string()).collect();
        names.extend((0..self.n_runs).map(|i| format!("z_a[{i}]")));
        names.extend((0..self.n_runs).map(|i| format!("z_tau[{i}]")));
        names
    }

    pub fn pack(&self, hyper: &GroupHyper, latents: &LatentVector) -> Result<Vec<f64>> {
        if latents.z_a.len() != self.n_runs || latents.z_tau.len() != self.n_runs {
            return Err(Error::DimensionMismatch(format!(
                "latents have lengths ({}, {}) for {} runs",
                latents.z_a.len(),
                latents.z_tau.len(),
                self.n_runs
            )));
        }
        let mut x = vec![hyper.mu_a, hyper.sigma_a.ln(), hyper.mu_tau, hyper.sigma_tau.ln()];
        x.extend(&latents.z_a);
        x.extend(&latents.z_tau);
        Ok(x)
    }

    pub fn hyper(&self, x: &[f64]) -> GroupHyper {
        GroupHyper {
            mu_a: x[Self::MU_A],
            sigma_a: x[Self::LOG_SIGMA_A].exp(),
            mu_tau: x[Self::MU_TAU],
            sigma_tau: x[Self::LOG_SIGMA_TAU].exp(),
        }
    }

    pub fn run_params(&self, x: &[f64], i: usize) -> RWParams {
        transform(&self.hyper(x), x[self.z_a(i)], x[self.z_tau(i)])
    }
}

/// Joint log posterior over the unconstrained space (Jacobian of the
/// log-scale transform included; additive constants kept).
pub fn joint_log_posterior(
    hyper: &GroupHyper,
    latents: &LatentVector,
    data: &FitDataset,
) -> Result<f64> {
    let layout = ParamLayout { n_runs: data.n_runs() };
    let x = layout.pack(hyper, latents)?;
    HierarchicalModel::new(data.clone()).log_posterior(&x)
}

/// Gradient of [`joint_log_posterior`] in [`ParamLayout`] order.
pub fn grad_joint_log_posterior(
    hyper: &GroupHyper,
    latents: &LatentVector,
    data: &FitDataset,
) -> Result<Vec<f64>> {
    let layout = ParamLayout { n_runs: data.n_runs() };
    let x = layout.pack(hyper, latents)?;
    let mut grad = vec![0.0; x.len()];
    HierarchicalModel::new(data.clone()).log_posterior_grad(&x, &mut grad)?;
    Ok(grad)
}

/// The posterior as a [`LogDensity`] target for the sampler.
#[derive(Debug, Clone)]
pub struct HierarchicalModel {
    data: FitDataset,
    layout: ParamLayout,
}

impl HierarchicalModel {
    pub fn new(data: FitDataset) -> Self {
        let layout = ParamLayout { n_runs: data.n_runs() };
        Self { data, layout }
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn data(&self) -> &FitDataset {
        &self.data
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.layout.dim() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.layout.dim(),
                x.len()
            )));
        }
        Ok(())
    }

    fn prior(&self, x: &[f64]) -> f64 {
        let l = self.layout;
        let mut lp = std_normal_lpdf(x[ParamLayout::MU_A]) + std_normal_lpdf(x[ParamLayout::MU_TAU]);
        lp += scale_prior(x[ParamLayout::LOG_SIGMA_A]).0;
        lp += scale_prior(x[ParamLayout::LOG_SIGMA_TAU]).0;
        for i in 0..l.n_runs {
            lp += std_normal_lpdf(x[l.z_a(i)]) + std_normal_lpdf(x[l.z_tau(i)]);
        }
        lp
    }

    pub fn log_posterior(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let terms = self
            .data
            .runs
            .par_iter()
            .enumerate()
            .map(|(i, run)| run_loglik(self.layout.run_params(x, i), run))
            .collect::<Result<Vec<f64>>>()?;
        let lp = self.prior(x) + terms.iter().sum::<f64>();
        if lp.is_nan() {
            return Err(Error::NumericFailure("log posterior is NaN".into()));
        }
        Ok(lp)
    }

    pub fn log_posterior_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_dim(x)?;
        let l = self.layout;
        let hyper = l.hyper(x);
        let terms = self
            .data
            .runs
            .par_iter()
            .enumerate()
            .map(|(i, run)| {
                let u_a = hyper.mu_a + hyper.sigma_a * x[l.z_a(i)];
                let u_tau = hyper.mu_tau + hyper.sigma_tau * x[l.z_tau(i)];
                let params = RWParams { a: probit_open(u_a), tau: TAU_MAX * probit_open(u_tau) };
                let lik = run_loglik_grad(params, run)?;
                // chain through the probit transforms
                Ok((lik.loglik, lik.d_a * normal_pdf(u_a), lik.d_tau * TAU_MAX * normal_pdf(u_tau)))
            })
            .collect::<Result<Vec<(f64, f64, f64)>>>()?;

        grad.fill(0.0);
        let mut lp = self.prior(x);
        grad[ParamLayout::MU_A] = -x[ParamLayout::MU_A];
        grad[ParamLayout::MU_TAU] = -x[ParamLayout::MU_TAU];
        grad[ParamLayout::LOG_SIGMA_A] = scale_prior(x[ParamLayout::LOG_SIGMA_A]).1;
        grad[ParamLayout::LOG_SIGMA_TAU] = scale_prior(x[ParamLayout::LOG_SIGMA_TAU]).1;
        for (i, &(ll, du_a, du_tau)) in terms.iter().enumerate() {
            lp += ll;
            let (za, zt) = (x[l.z_a(i)], x[l.z_tau(i)]);
            grad[ParamLayout::MU_A] += du_a;
            grad[ParamLayout::LOG_SIGMA_A] += du_a * hyper.sigma_a * za;
            grad[l.z_a(i)] = -za + du_a * hyper.sigma_a;
            grad[ParamLayout::MU_TAU] += du_tau;
            grad[ParamLayout::LOG_SIGMA_TAU] += du_tau * hyper.sigma_tau * zt;
            grad[l.z_tau(i)] = -zt + du_tau * hyper.sigma_tau;
        }
        if lp.is_nan() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericFailure("non-finite log posterior or gradient".into()));
        }
        Ok(lp)
    }
}

impl LogDensity for HierarchicalModel {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.log_posterior(x)
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.log_posterior_grad(x, grad)
    }

    fn param_names(&self) -> Vec<String> {
        self.layout.names()
    }
}

/// A simulated run with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRun {
    pub params: RWParams,
    pub data: RunData,
    pub log: RunLog,
}

/// Generates one run from the softmax policy, learning online.
pub fn simulate_run(
    params: RWParams,
    structure: &RewardStructure,
    n_trials: usize,
    seed: u64,
) -> Result<SimulatedRun> {
    if n_trials == 0 {
        return Err(Error::invalid("simulate_run needs at least one trial"));
    }
    let mut env = BanditEnv::new(structure.clone(), rng::derive_seed(seed, rng::ENV_STREAM));
    let mut agent = RwAgent::new(params, false, rng::derive_seed(seed, rng::AGENT_STREAM));
    let log = session::play(&mut agent, &mut env, n_trials, "simulated", 0);
    Ok(SimulatedRun { params, data: RunData::from_log(&log), log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(pairs: &[(u8, u8)]) -> RunData {
        RunData::new(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
            vec![true; pairs.len()],
        )
        .unwrap()
    }

    #[test]
    fn transform_midpoint() {
        let h = GroupHyper { mu_a: 0.0, sigma_a: 0.0, mu_tau: 0.0, sigma_tau: 0.0 };
        for z in [-3.0, 0.0, 2.0] {
            assert_eq!(transform(&h, z, -z), RWParams { a: 0.5, tau: 2.5 });
        }
    }

    #[test]
    fn transform_upper_tail() {
        let h = GroupHyper { mu_a: 0.0, sigma_a: 1.0, mu_tau: 0.0, sigma_tau: 1.0 };
        let p = transform(&h, 1.6449, 1.6449);
        // Phi(1.6449) = 0.950004 from the normal CDF
        assert!((p.a - 0.95).abs() < 1e-4, "{}", p.a);
        assert!((p.tau - 4.75).abs() < 5e-4, "{}", p.tau);
    }

    #[test]
    fn natural_round_trip() {
        let h = GroupHyper::from_natural(0.2, 3.0, 0.1, 0.1).unwrap();
        assert!((h.natural_a() - 0.2).abs() < 1e-12);
        assert!((h.natural_tau() - 3.0).abs() < 1e-12);
        assert!(GroupHyper::from_natural(0.2, 5.0, 0.1, 0.1).is_err());
    }

    #[test]
    fn first_trial_is_a_coin() {
        for tau in [0.0, 1.0, 5.0] {
            let p = RWParams::new(0.3, tau).unwrap();
            assert_eq!(run_loglik(p, &run(&[(1, 0)])).unwrap(), 0.5f64.ln());
            assert_eq!(run_loglik(p, &run(&[(0, 1)])).unwrap(), 0.5f64.ln());
        }
    }

    #[test]
    fn second_trial_after_rewarded_y() {
        let p = RWParams::new(0.5, 5.0).unwrap();
        let ll = run_loglik(p, &run(&[(1, 1), (1, 0)])).unwrap();
        // V_Y = 0.5 after trial 1, so trial 2 contributes ln(logistic(2.5)) = ln(0.924142)
        let expected = 0.5f64.ln() + 0.924_141_819_978_756_7f64.ln();
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn masked_run_is_empty_product() {
        let d = RunData::new(vec![1, 0, 1], vec![1, 1, 0], vec![false; 3]).unwrap();
        assert_eq!(run_loglik(RWParams::new(0.4, 3.0).unwrap(), &d).unwrap(), 0.0);
        let g = run_loglik_grad(RWParams::new(0.4, 3.0).unwrap(), &d).unwrap();
        assert_eq!((g.loglik, g.d_a, g.d_tau), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_ragged_run() {
        assert!(matches!(
            RunData::new(vec![0, 1], vec![0], vec![true, true]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(RunData::new(vec![2], vec![0], vec![true]).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let data = FitDataset::new(vec![run(&[(0, 1)]); 3]);
        let h = GroupHyper { mu_a: 0.0, sigma_a: 0.1, mu_tau: 0.0, sigma_tau: 0.1 };
        assert!(matches!(
            joint_log_posterior(&h, &LatentVector::zeros(2), &data),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn empty_dataset_posterior_peaks_at_zero() {
        let data = FitDataset::default();
        let lp = |mu_a: f64, mu_tau: f64| {
            let h = GroupHyper { mu_a, sigma_a: 0.1, mu_tau, sigma_tau: 0.1 };
            joint_log_posterior(&h, &LatentVector::zeros(0), &data).unwrap()
        };
        let at_zero = lp(0.0, 0.0);
        for (a, t) in [(0.1, 0.0), (0.0, -0.1), (0.5, 0.5)] {
            assert!(lp(a, t) < at_zero);
        }
        let h = GroupHyper { mu_a: 0.0, sigma_a: 0.1, mu_tau: 0.0, sigma_tau: 0.1 };
        let g = grad_joint_log_posterior(&h, &LatentVector::zeros(0), &data).unwrap();
        assert_eq!(g[ParamLayout::MU_A], 0.0);
        assert_eq!(g[ParamLayout::MU_TAU], 0.0);
    }

    #[test]
    fn simulate_flat_policy_is_a_coin() {
        let p = RWParams::new(0.5, 0.0).unwrap();
        let n = 20_000;
        let sim = simulate_run(p, &RewardStructure::asymmetric(), n, 3).unwrap();
        let ys = sim.data.choices.iter().filter(|&&c| c == 1).count() as f64 / n as f64;
        assert!((ys - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(), "{ys}");
        assert!(simulate_run(p, &RewardStructure::asymmetric(), 0, 3).is_err());
    }

    #[test]
    fn simulate_is_deterministic() {
        let p = RWParams::new(0.2, 4.0).unwrap();
        let s = RewardStructure::asymmetric();
        assert_eq!(simulate_run(p, &s, 100, 9).unwrap(), simulate_run(p, &s, 100, 9).unwrap());
        assert_ne!(
            simulate_run(p, &s, 100, 9).unwrap().data,
            simulate_run(p, &s, 100, 10).unwrap().data
        );
    }

    #[test]
    fn simulate_band_on_asymmetric() {
        // Band established by a 1000-seed simulation of (a = 0.2, tau = 5).
        let p = RWParams::new(0.2, 5.0).unwrap();
        let s = RewardStructure::asymmetric();
        let mean: f64 = (0..1000)
            .map(|seed| {
                let sim = simulate_run(p, &s, 100, seed).unwrap();
                sim.data.choices.iter().filter(|&&c| c == 0).count() as f64 / 100.0
            })
            .sum::<f64>()
            / 1000.0;
        assert!((0.75..=0.98).contains(&mean), "{mean}");
    }

    fn arb_run() -> impl Strategy<Value = RunData> {
        prop::collection::vec((0u8..=1, 0u8..=1, prop::bool::weighted(0.9)), 0..60).prop_map(|v| {
            RunData {
                choices: v.iter().map(|t| t.0).collect(),
                rewards: v.iter().map(|t| t.1).collect(),
                valid: v.iter().map(|t| t.2).collect(),
            }
        })
    }

    proptest! {
        #[test]
        fn loglik_nonpositive(a in 0.001f64..0.999, tau in 0.0f64..=5.0, d in arb_run()) {
            let p = RWParams::new(a, tau).unwrap();
            prop_assert!(run_loglik(p, &d).unwrap() <= 0.0);
        }

        #[test]
        fn flat_policy_loglik(a in 0.001f64..0.999, d in arb_run()) {
            let ll = run_loglik(RWParams::new(a, 0.0).unwrap(), &d).unwrap();
            let expected = d.n_valid() as f64 * 0.5f64.ln();
            prop_assert!((ll - expected).abs() < 1e-9);
        }

        #[test]
        fn transform_range(mu_a in -1e3f64..1e3, s_a in 0.0f64..1e3, z_a in -1e3f64..1e3,
                           mu_t in -1e3f64..1e3, s_t in 0.0f64..1e3, z_t in -1e3f64..1e3) {
            let p = transform(&GroupHyper { mu_a, sigma_a: s_a, mu_tau: mu_t, sigma_tau: s_t }, z_a, z_t);
            prop_assert!(p.a > 0.0 && p.a < 1.0);
            prop_assert!(p.tau > 0.0 && p.tau < TAU_MAX);
        }

        #[test]
        fn masked_trials_are_neutral(
            a in 0.01f64..0.99,
            tau in 0.0f64..=5.0,
            d in arb_run(),
            inserts in prop::collection::vec((0usize..100, 0u8..=1, 0u8..=1), 0..10),
        ) {
            let p = RWParams::new(a, tau).unwrap();
            let mut padded = d.clone();
            for (pos, c, r) in inserts {
                let at = pos % (padded.len() + 1);
                padded.choices.insert(at, c);
                padded.rewards.insert(at, r);
                padded.valid.insert(at, false);
            }
            let g1 = run_loglik_grad(p, &d).unwrap();
            let g2 = run_loglik_grad(p, &padded).unwrap();
            prop_assert_eq!(g1, g2);
        }

        #[test]
        fn greedy_data_loglik_monotone_in_tau(
            a in 0.05f64..0.95,
            rewards in prop::collection::vec(0u8..=1, 1..60),
            tau_lo in 0.0f64..5.0,
            dt in 0.0f64..5.0,
        ) {
            // Build a run where every choice is the argmax of current values (ties to X).
            let mut v = [0.0f64; 2];
            let mut choices = Vec::new();
            for &r in &rewards {
                let c = usize::from(v[1] > v[0]);
                choices.push(c as u8);
                v[c] += a * (f64::from(r) - v[c]);
            }
            let d = RunData { valid: vec![true; choices.len()], choices, rewards };
            let tau_hi = (tau_lo + dt).min(TAU_MAX);
            let lo = run_loglik(RWParams { a, tau: tau_lo }, &d).unwrap();
            let hi = run_loglik(RWParams { a, tau: tau_hi }, &d).unwrap();
            prop_assert!(hi >= lo - 1e-12);
        }
    }
}
