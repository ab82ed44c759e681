//! Warmup adaptation: dual-averaging step size and windowed diagonal metric.

/// Nesterov dual averaging on `log(step size)`.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target_accept: f64,
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    count: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
}

impl DualAveraging {
    pub fn new(target_accept: f64, init_eps: f64) -> Self {
        Self {
            target_accept,
            mu: (10.0 * init_eps).ln(),
            log_eps: init_eps.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            count: 0.0,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
        }
    }

    pub fn restart(&mut self, init_eps: f64) {
        *self = Self::new(self.target_accept, init_eps);
    }

    pub fn update(&mut self, accept_stat: f64) {
        self.count += 1.0;
        let m = self.count;
        let eta = 1.0 / (m + self.t0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target_accept - accept_stat);
        self.log_eps = self.mu - m.sqrt() / self.gamma * self.h_bar;
        let w = m.powf(-self.kappa);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }

    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    pub fn finalized(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Running per-coordinate variance (Welford).
#[derive(Debug, Clone)]
pub struct WelfordVariance {
    mean: Vec<f64>,
    m2: Vec<f64>,
    count: usize,
}

impl WelfordVariance {
    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], m2: vec![0.0; dim], count: 0 }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &xi) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = xi - *m;
            *m += delta / n;
            *s += delta * (xi - *m);
        }
    }

    /// Variance shrunk toward 1e-3, as in Stan's metric regularization.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.m2
            .iter()
            .map(|&s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    pub fn reset(&mut self) {
        self.mean.fill(0.0);
        self.m2.fill(0.0);
        self.count = 0;
    }
}

/// Which phase a warmup iteration belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmupPhase {
    /// Step size only.
    Fast,
    /// Step size plus metric accumulation; `true` on the last draw of a window.
    Slow { window_end: bool },
}

/// The initial-buffer / doubling-window / terminal-buffer schedule.
#[derive(Debug, Clone)]
pub struct WarmupSchedule {
    phases: Vec<WarmupPhase>,
}

impl WarmupSchedule {
    pub fn new(n_warmup: usize) -> Self {
        let (mut init, mut term, mut base) = (75usize, 50usize, 25usize);
        if n_warmup < 20 {
            return Self { phases: vec![WarmupPhase::Fast; n_warmup] };
        }
        if init + term + base > n_warmup {
            init = (0.15 * n_warmup as f64) as usize;
            term = (0.1 * n_warmup as f64) as usize;
            base = n_warmup - init - term;
        }
        let adapt_end = n_warmup - term;
        let mut phases = vec![WarmupPhase::Fast; n_warmup];
        let mut start = init;
        let mut size = base;
        while start < adapt_end {
            let mut end = start + size;
            // stretch the last window to the terminal buffer
            if end + 2 * size > adapt_end {
                end = adapt_end;
            }
            for (i, phase) in phases.iter_mut().enumerate().take(end).skip(start) {
                *phase = WarmupPhase::Slow { window_end: i + 1 == end };
            }
            start = end;
            size *= 2;
        }
        Self { phases }
    }

    pub fn phase(&self, iteration: usize) -> WarmupPhase {
        self.phases[iteration]
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}
