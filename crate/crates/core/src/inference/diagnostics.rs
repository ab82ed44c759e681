//! Convergence diagnostics on rank-normalized split chains.
//!
//! Each chain is halved, all draws are pooled and replaced by normal scores of
//! their fractional ranks, and the classic between/within variance ratio is
//! computed on the result. R-hat is the larger of the bulk value and the value
//! on the folded draws `|x - median|`. Bulk ESS uses the same rank-normalized
//! split chains with Geyer's initial monotone sequence truncation.

use crate::rw_model::normal_quantile;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = n / 2;
    chains
        .iter()
        .flat_map(|c| {
            // odd lengths drop the middle draw
            [c[..half].to_vec(), c[n - half..n].to_vec()]
        })
        .collect()
}

/// Normal scores of pooled fractional ranks (ties get their average rank).
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pooled: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, xs)| xs.iter().enumerate().map(move |(i, &x)| (x, c, i)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = pooled.len() as f64;
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let z = normal_quantile((rank - 0.375) / (s + 0.25));
        for &(_, c, k) in &pooled[i..=j] {
            out[c][k] = z;
        }
        i = j + 1;
    }
    out
}

fn rhat_basic(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| var(c)).sum::<f64>() / m;
    let b = n * var(&means);
    if !(w > 0.0) || !w.is_finite() {
        return None;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Some((var_plus / w).sqrt())
}

fn is_degenerate(chains: &[Vec<f64>]) -> bool {
    let first = chains.iter().flatten().next().copied();
    match first {
        None => true,
        Some(f) => chains.iter().flatten().all(|&x| x == f || !x.is_finite()),
    }
}

/// Rank-normalized split R-hat. `None` for constant or too-short chains.
///
/// Rank normalization caps R-hat for fully separated chains (two disjoint
/// chains give about 1.8), so the plain split R-hat of the raw draws is
/// folded into the maximum as well.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.is_empty() || chains.iter().any(|c| c.len() < 4) || is_degenerate(chains) {
        return None;
    }
    let halves = split(chains);
    let classic = if halves.iter().flatten().all(|x| x.is_finite()) {
        rhat_basic(&halves)
    } else {
        None
    };
    let bulk = rhat_basic(&rank_normalize(&halves))?;
    let bulk = classic.map_or(bulk, |c| bulk.max(c));
    let pooled: Vec<f64> = halves.iter().flatten().copied().collect();
    let med = super::summary::quantile(&pooled, 0.5);
    let folded: Vec<Vec<f64>> =
        halves.iter().map(|c| c.iter().map(|x| (x - med).abs()).collect()).collect();
    let tail = if is_degenerate(&folded) { None } else { rhat_basic(&rank_normalize(&folded)) };
    Some(tail.map_or(bulk, |t| bulk.max(t)))
}

fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Multi-chain ESS with Geyer's initial monotone sequence.
pub fn ess(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min()?;
    if m == 0 || n < 4 || is_degenerate(chains) {
        return None;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let nf = n as f64;
    let chain_var: Vec<f64> =
        chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, 0) * nf / (nf - 1.0)).collect();
    let mean_var = chain_var.iter().sum::<f64>() / m as f64;
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += var(&means);
    }
    if !(var_plus > 0.0) {
        return None;
    }
    let acov_mean = |lag: usize| {
        chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, lag)).sum::<f64>() / m as f64
    };
    let rho_at = |lag: usize| 1.0 - (mean_var - acov_mean(lag)) / var_plus;

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho_at(1);
    rho[1] = odd;
    let mut t = 0;
    while t + 5 < n && (even + odd).is_finite() && even + odd > 0.0 {
        t += 2;
        even = rho_at(t);
        odd = rho_at(t + 1);
        if even + odd >= 0.0 {
            rho[t] = even;
            rho[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 {
        rho[max_t] = even;
    }
    let mut t = 0;
    while t + 4 <= max_t {
        t += 2;
        let prev = rho[t - 2] + rho[t - 1];
        if rho[t] + rho[t + 1] > prev {
            rho[t] = prev / 2.0;
            rho[t + 1] = rho[t];
        }
    }
    let total = (m * n) as f64;
    let mut tau = -1.0 + 2.0 * rho[..=max_t].iter().sum::<f64>() + rho[max_t + 1];
    tau = tau.max(1.0 / total.log10());
    Some(total / tau)
}

/// Bulk ESS: [`ess`] of the rank-normalized split chains.
pub fn ess_bulk(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.is_empty() || chains.iter().any(|c| c.len() < 4) || is_degenerate(chains) {
        return None;
    }
    ess(&rank_normalize(&split(chains)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(seed: u64, n: usize) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
    }

    #[test]
    fn one_stream_split_in_two() {
        let x = white(1, 2000);
        let chains = vec![x[..1000].to_vec(), x[1000..].to_vec()];
        let r = split_rhat(&chains).unwrap();
        assert!((0.995..=1.01).contains(&r), "{r}");
    }

    #[test]
    fn disjoint_chains_fail() {
        let a = white(2, 500);
        let b: Vec<f64> = white(3, 500).iter().map(|v| v + 10.0).collect();
        assert!(split_rhat(&[a, b]).unwrap() > 2.0);
    }

    #[test]
    fn iid_ess_near_draw_count() {
        let chains: Vec<Vec<f64>> = (0..4).map(|s| white(10 + s, 1000)).collect();
        let e = ess_bulk(&chains).unwrap();
        assert!((e - 4000.0).abs() <= 0.2 * 4000.0, "{e}");
    }

    #[test]
    fn autocorrelated_ess_is_small() {
        // AR(1) with phi = 0.9: ESS/N is about (1 - phi) / (1 + phi) = 0.053.
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|s| {
                let e = white(20 + s, 2000);
                let mut x = 0.0;
                e.iter()
                    .map(|v| {
                        x = 0.9 * x + v;
                        x
                    })
                    .collect()
            })
            .collect();
        let e = ess_bulk(&chains).unwrap();
        assert!(e > 200.0 && e < 800.0, "{e}");
    }

    #[test]
    fn constant_chains_are_degenerate() {
        let c = vec![vec![1.5; 100], vec![1.5; 100]];
        assert_eq!(split_rhat(&c), None);
        assert_eq!(ess_bulk(&c), None);
        assert_eq!(split_rhat(&[vec![1.0, 2.0]]), None);
    }

    #[test]
    fn rank_normalization_is_monotone_and_tied() {
        let z = rank_normalize(&[vec![3.0, 1.0, 2.0, 2.0]]);
        assert!(z[0][1] < z[0][2] && z[0][2] < z[0][0]);
        assert_eq!(z[0][2], z[0][3]);
    }

    #[test]
    fn chain_order_does_not_matter() {
        let mut chains: Vec<Vec<f64>> = (0..4).map(|s| white(40 + s, 200)).collect();
        let r1 = split_rhat(&chains).unwrap();
        let e1 = ess_bulk(&chains).unwrap();
        chains.reverse();
        assert!((split_rhat(&chains).unwrap() - r1).abs() < 1e-12);
        assert!((ess_bulk(&chains).unwrap() - e1).abs() < 1e-9);
    }
}
