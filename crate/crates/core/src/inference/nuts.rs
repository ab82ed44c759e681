//! Multinomial No-U-Turn transition with a diagonal Euclidean metric.
//!
//! Trees are grown by doubling in a random direction. Within a subtree the
//! proposal is chosen by uniform progressive sampling; across doublings the
//! proposal is biased toward the new subtree. The generalized no-U-turn
//! criterion is applied to every merged subtree, plus the two extra checks
//! across each merge boundary.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::inference::LogDensity;
use crate::rng::{self, Rng};

const MAX_ENERGY_ERROR: f64 = 1000.0;

/// Position, momentum and cached density/gradient at one integrator point.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub energy: f64,
}

pub struct Integrator<'a, M: LogDensity + ?Sized> {
    pub model: &'a M,
    /// Diagonal inverse metric (posterior variance estimate).
    pub inv_metric: &'a [f64],
}

impl<M: LogDensity + ?Sized> Integrator<'_, M> {
    pub fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(self.inv_metric).map(|(pi, m)| pi * pi * m).sum::<f64>()
    }

    pub fn hamiltonian(&self, z: &PhasePoint) -> f64 {
        -z.logp + self.kinetic(&z.p)
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(self.inv_metric).map(|(pi, m)| pi * m).collect()
    }

    pub fn sample_momentum(&self, rng: &mut Rng) -> Vec<f64> {
        self.inv_metric
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                z / m.sqrt()
            })
            .collect()
    }

    /// One leapfrog step. Returns `None` when the density cannot be evaluated.
    pub fn leapfrog(&self, z: &PhasePoint, eps: f64) -> Option<PhasePoint> {
        let mut p = z.p.clone();
        for (pi, g) in p.iter_mut().zip(&z.grad) {
            *pi += 0.5 * eps * g;
        }
        let q: Vec<f64> = z
            .q
            .iter()
            .zip(&p)
            .zip(self.inv_metric)
            .map(|((qi, pi), m)| qi + eps * m * pi)
            .collect();
        let mut grad = vec![0.0; q.len()];
        let logp = self.model.log_density_grad(&q, &mut grad).ok()?;
        if !logp.is_finite() {
            return None;
        }
        for (pi, g) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * g;
        }
        Some(PhasePoint { q, p, grad, logp })
    }
}

/// Summary of a subtree in build order (`beg` is adjacent to where it was
/// grown from, `end` is the new frontier).
struct Subtree {
    end: PhasePoint,
    proposal: PhasePoint,
    log_sum_weight: f64,
    rho: Vec<f64>,
    p_beg: Vec<f64>,
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
    sum_accept: f64,
    n_leapfrog: usize,
}

enum Build {
    Valid(Subtree),
    /// Turning or divergent: stop growing. Carries leapfrog accounting.
    Invalid { sum_accept: f64, n_leapfrog: usize, divergent: bool },
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// Checks the merged tree plus both merge-boundary sub-trajectories.
fn merged_ok(
    rho_init: &[f64],
    p_sharp_init_beg: &[f64],
    p_sharp_init_end: &[f64],
    p_init_end: &[f64],
    rho_final: &[f64],
    p_sharp_final_beg: &[f64],
    p_sharp_final_end: &[f64],
    p_final_beg: &[f64],
) -> (bool, Vec<f64>) {
    let rho = add(rho_init, rho_final);
    let mut ok = no_u_turn(p_sharp_init_beg, p_sharp_final_end, &rho);
    let ext = add(rho_init, p_final_beg);
    ok &= no_u_turn(p_sharp_init_beg, p_sharp_final_beg, &ext);
    let ext = add(rho_final, p_init_end);
    ok &= no_u_turn(p_sharp_init_end, p_sharp_final_end, &ext);
    (ok, rho)
}

pub struct Nuts<'a, M: LogDensity + ?Sized> {
    pub integrator: Integrator<'a, M>,
    pub max_depth: usize,
}

impl<M: LogDensity + ?Sized> Nuts<'_, M> {
    fn build_tree(
        &self,
        from: &PhasePoint,
        depth: usize,
        eps: f64,
        h0: f64,
        rng: &mut Rng,
    ) -> Build {
        if depth == 0 {
            let Some(z) = self.integrator.leapfrog(from, eps) else {
                return Build::Invalid { sum_accept: 0.0, n_leapfrog: 1, divergent: true };
            };
            let h = self.integrator.hamiltonian(&z);
            if !h.is_finite() || h - h0 > MAX_ENERGY_ERROR {
                return Build::Invalid { sum_accept: 0.0, n_leapfrog: 1, divergent: true };
            }
            let accept = if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            let p_sharp = self.integrator.p_sharp(&z.p);
            return Build::Valid(Subtree {
                rho: z.p.clone(),
                p_beg: z.p.clone(),
                p_sharp_beg: p_sharp.clone(),
                p_sharp_end: p_sharp,
                log_sum_weight: h0 - h,
                sum_accept: accept,
                n_leapfrog: 1,
                proposal: z.clone(),
                end: z,
            });
        }

        let init = match self.build_tree(from, depth - 1, eps, h0, rng) {
            Build::Valid(t) => t,
            invalid => return invalid,
        };
        let fin = match self.build_tree(&init.end, depth - 1, eps, h0, rng) {
            Build::Valid(t) => t,
            Build::Invalid { sum_accept, n_leapfrog, divergent } => {
                return Build::Invalid {
                    sum_accept: sum_accept + init.sum_accept,
                    n_leapfrog: n_leapfrog + init.n_leapfrog,
                    divergent,
                };
            }
        };

        let log_sum_weight = log_add_exp(init.log_sum_weight, fin.log_sum_weight);
        let take_final = rng::unit_f64(rng) < (fin.log_sum_weight - log_sum_weight).exp();
        let sum_accept = init.sum_accept + fin.sum_accept;
        let n_leapfrog = init.n_leapfrog + fin.n_leapfrog;

        let (ok, rho) = merged_ok(
            &init.rho,
            &init.p_sharp_beg,
            &init.p_sharp_end,
            &init.end.p,
            &fin.rho,
            &fin.p_sharp_beg,
            &fin.p_sharp_end,
            &fin.p_beg,
        );
        if !ok {
            return Build::Invalid { sum_accept, n_leapfrog, divergent: false };
        }
        Build::Valid(Subtree {
            proposal: if take_final { fin.proposal } else { init.proposal },
            end: fin.end,
            log_sum_weight,
            rho,
            p_beg: init.p_beg,
            p_sharp_beg: init.p_sharp_beg,
            p_sharp_end: fin.p_sharp_end,
            sum_accept,
            n_leapfrog,
        })
    }

    /// One NUTS transition from `current` (whose `p` is overwritten).
    pub fn transition(
        &self,
        current: &PhasePoint,
        eps: f64,
        rng: &mut Rng,
    ) -> Result<(PhasePoint, TransitionStats)> {
        let mut z0 = current.clone();
        z0.p = self.integrator.sample_momentum(rng);
        let h0 = self.integrator.hamiltonian(&z0);
        let p_sharp0 = self.integrator.p_sharp(&z0.p);

        // Tree edges in time order.
        let mut left = z0.clone();
        let mut right = z0.clone();
        let mut p_sharp_left = p_sharp0.clone();
        let mut p_sharp_right = p_sharp0;
        let mut rho = z0.p.clone();
        let mut sample = z0.clone();
        let mut log_sum_weight = 0.0;

        let mut stats = TransitionStats::default();
        let mut sum_accept = 0.0;

        while stats.tree_depth < self.max_depth {
            let forward = rng.next_u64() & 1 == 1;
            let (edge, step) = if forward { (&right, eps) } else { (&left, -eps) };
            let build = self.build_tree(edge, stats.tree_depth, step, h0, rng);
            let sub = match build {
                Build::Valid(sub) => sub,
                Build::Invalid { sum_accept: s, n_leapfrog, divergent } => {
                    sum_accept += s;
                    stats.n_leapfrog += n_leapfrog;
                    stats.divergent = divergent;
                    break;
                }
            };
            stats.tree_depth += 1;
            sum_accept += sub.sum_accept;
            stats.n_leapfrog += sub.n_leapfrog;

            // biased progressive sampling across doublings
            if sub.log_sum_weight > log_sum_weight
                || rng::unit_f64(rng) < (sub.log_sum_weight - log_sum_weight).exp()
            {
                sample = sub.proposal.clone();
            }
            log_sum_weight = log_add_exp(log_sum_weight, sub.log_sum_weight);

            // old tree is the "init" subtree in build order
            let (init_beg_sharp, init_end_sharp, init_end_p) = if forward {
                (&p_sharp_left, &p_sharp_right, &right.p)
            } else {
                (&p_sharp_right, &p_sharp_left, &left.p)
            };
            let (ok, merged_rho) = merged_ok(
                &rho,
                init_beg_sharp,
                init_end_sharp,
                init_end_p,
                &sub.rho,
                &sub.p_sharp_beg,
                &sub.p_sharp_end,
                &sub.p_beg,
            );
            rho = merged_rho;
            if forward {
                right = sub.end;
                p_sharp_right = sub.p_sharp_end;
            } else {
                left = sub.end;
                p_sharp_left = sub.p_sharp_end;
            }
            if !ok {
                break;
            }
        }

        stats.accept_stat =
            if stats.n_leapfrog > 0 { sum_accept / stats.n_leapfrog as f64 } else { 0.0 };
        stats.energy = self.integrator.hamiltonian(&sample);
        Ok((sample, stats))
    }
}

/// Stan's step-size initialisation: double or halve until the one-step
/// acceptance probability crosses 0.8.
pub fn find_reasonable_step_size<M: LogDensity + ?Sized>(
    integrator: &Integrator<'_, M>,
    z: &PhasePoint,
    init_eps: f64,
    rng: &mut Rng,
) -> f64 {
    let mut eps = init_eps;
    let mut z0 = z.clone();
    z0.p = integrator.sample_momentum(rng);
    let h0 = integrator.hamiltonian(&z0);
    let delta_h = |eps: f64| match integrator.leapfrog(&z0, eps) {
        Some(z1) => {
            let h = integrator.hamiltonian(&z1);
            if h.is_finite() { h0 - h } else { f64::NEG_INFINITY }
        }
        None => f64::NEG_INFINITY,
    };
    let threshold = 0.8f64.ln();
    let direction = if delta_h(eps) > threshold { 1.0 } else { -1.0 };
    for _ in 0..100 {
        let next = if direction > 0.0 { eps * 2.0 } else { eps * 0.5 };
        let dh = delta_h(next);
        let crossed = if direction > 0.0 { !(dh > threshold) } else { dh > threshold };
        if crossed {
            return if direction > 0.0 { eps } else { next };
        }
        eps = next;
        if !(1e-10..=1e7).contains(&eps) {
            break;
        }
    }
    eps
}
