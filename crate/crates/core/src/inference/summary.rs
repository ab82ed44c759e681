//! Posterior summaries: mean, sd, central 95% interval, R-hat, bulk ESS.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::diagnostics::{ess_bulk, split_rhat};
use super::Draws;
use crate::error::Result;

/// Quantile by linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    #[serde(rename = "ci2.5")]
    pub ci_low: f64,
    #[serde(rename = "ci97.5")]
    pub ci_high: f64,
    pub rhat: Option<f64>,
    pub ess_bulk: Option<f64>,
}

impl ParamSummary {
    pub fn from_chains(name: &str, chains: &[Vec<f64>]) -> Self {
        let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
        let n = pooled.len() as f64;
        let mean = pooled.iter().sum::<f64>() / n;
        let sd = if pooled.len() > 1 {
            (pooled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        pooled.sort_by(f64::total_cmp);
        let ci_low = quantile_sorted(&pooled, 0.025);
        let ci_high = quantile_sorted(&pooled, 0.975);
        let multi = chains.len() >= 2 && chains.iter().all(|c| c.len() >= 4);
        let rhat = if multi { split_rhat(chains) } else { None };
        let ess = if multi { ess_bulk(chains) } else { None };
        if multi && rhat.is_none() {
            log::warn!("{name}: R-hat undefined (constant chains)");
        }
        if !(ci_low <= mean && mean <= ci_high) {
            log::warn!("{name}: mean {mean} outside its 95% interval [{ci_low}, {ci_high}]");
        }
        Self { parameter: name.to_string(), mean, sd, ci_low, ci_high, rhat, ess_bulk: ess }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.parameter == name)
    }

    pub fn max_rhat(&self) -> Option<f64> {
        self.params.iter().filter_map(|p| p.rhat).reduce(f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for p in &self.params {
            wtr.serialize(p)?;
        }
        wtr.flush().map_err(|e| crate::Error::io("<summary>", e))?;
        Ok(())
    }
}

/// Summarizes every parameter of `draws`.
pub fn summarize(draws: &Draws) -> PosteriorSummary {
    let params = (0..draws.dim())
        .map(|j| ParamSummary::from_chains(&draws.names[j], &draws.param_chains(j)))
        .collect();
    PosteriorSummary { params }
}
