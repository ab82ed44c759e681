//! Agent interface and reference policies.
//!
//! Every agent sees the same [`History`] an LLM participant would see in its
//! prompt and returns a [`Choice`]. Synthetic agents never return
//! [`Choice::Invalid`]; that state only arises from parsing model output.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bandit::{BanditEnv, RewardStructure};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::rw_model::{self, GroupHyper, RWParams};
use crate::session::{self, RunLog};

/// A valid arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    X,
    Y,
}

impl Arm {
    pub fn other(self) -> Arm {
        match self {
            Arm::X => Arm::Y,
            Arm::Y => Arm::X,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Arm::X => 0,
            Arm::Y => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    X,
    Y,
    Invalid,
}

impl Choice {
    pub fn arm(self) -> Option<Arm> {
        match self {
            Choice::X => Some(Arm::X),
            Choice::Y => Some(Arm::Y),
            Choice::Invalid => None,
        }
    }

    pub fn is_valid(self) -> bool {
        self != Choice::Invalid
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Choice::X => "X",
            Choice::Y => "Y",
            Choice::Invalid => "Invalid",
        }
    }

    pub fn parse_label(s: &str) -> Option<Choice> {
        match s {
            "X" => Some(Choice::X),
            "Y" => Some(Choice::Y),
            "Invalid" => Some(Choice::Invalid),
            _ => None,
        }
    }
}

impl From<Arm> for Choice {
    fn from(arm: Arm) -> Self {
        match arm {
            Arm::X => Choice::X,
            Arm::Y => Choice::Y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryEntry {
    /// 1-based trial index.
    pub trial: u32,
    pub choice: Choice,
    pub reward: u8,
}

/// Trials played so far, indexed 1..=n without gaps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    entries: Vec<HistoryEntry>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a history from `(choice, reward)` pairs, numbering trials from 1.
    pub fn from_pairs(pairs: &[(Choice, u8)]) -> Self {
        let mut h = Self::new();
        for &(c, r) in pairs {
            h.push(c, r);
        }
        h
    }

    pub fn push(&mut self, choice: Choice, reward: u8) {
        let trial = self.entries.len() as u32 + 1;
        self.entries.push(HistoryEntry { trial, choice, reward });
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_valid(&self) -> Option<(Arm, u8)> {
        self.entries.iter().rev().find_map(|e| e.choice.arm().map(|a| (a, e.reward)))
    }
}

pub trait Agent: Send {
    fn name(&self) -> String;

    fn choose(&mut self, history: &History) -> Choice;

    /// Feedback for the trial just played.
    fn observe(&mut self, _choice: Choice, _reward: u8) {}

    /// Raw provider text behind the most recent choice, if any.
    fn last_raw_token(&self) -> Option<&str> {
        None
    }
}

/// Fair coin between X and Y.
pub struct RandomAgent {
    rng: Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self { rng: rng::seeded(seed) }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> String {
        "random".into()
    }

    fn choose(&mut self, _history: &History) -> Choice {
        if rng::bernoulli(&mut self.rng, 0.5) {
            Choice::Y
        } else {
            Choice::X
        }
    }
}

/// Always plays the arm with the highest true reward probability.
pub struct OracleAgent {
    arm: Arm,
}

impl OracleAgent {
    pub fn new(structure: &RewardStructure) -> Self {
        Self { arm: structure.target_arm() }
    }
}

impl Agent for OracleAgent {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn choose(&mut self, _history: &History) -> Choice {
        self.arm.into()
    }
}

pub const DEFAULT_EPSILON: f64 = 0.1;

/// With probability `epsilon` a uniform arm, otherwise the arm with the best
/// empirical mean reward (unvisited arms count as 0, ties toward X).
pub struct EpsilonGreedyAgent {
    epsilon: f64,
    rng: Rng,
}

impl EpsilonGreedyAgent {
    pub fn new(epsilon: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::invalid(format!("epsilon {epsilon} outside [0, 1]")));
        }
        Ok(Self { epsilon, rng: rng::seeded(seed) })
    }
}

impl Agent for EpsilonGreedyAgent {
    fn name(&self) -> String {
        format!("epsilon_greedy({})", self.epsilon)
    }

    fn choose(&mut self, history: &History) -> Choice {
        if rng::bernoulli(&mut self.rng, self.epsilon) {
            return if rng::bernoulli(&mut self.rng, 0.5) { Choice::Y } else { Choice::X };
        }
        let mut sums = [0.0f64; 2];
        let mut counts = [0u32; 2];
        for e in history.entries() {
            if let Some(arm) = e.choice.arm() {
                sums[arm.index()] += f64::from(e.reward);
                counts[arm.index()] += 1;
            }
        }
        let mean = |i: usize| if counts[i] == 0 { 0.0 } else { sums[i] / f64::from(counts[i]) };
        if mean(1) > mean(0) {
            Choice::Y
        } else {
            Choice::X
        }
    }
}

/// Win-stay, lose-shift. Starts on `first`.
pub struct WslsAgent {
    first: Arm,
}

impl WslsAgent {
    pub fn new(first: Arm) -> Self {
        Self { first }
    }
}

impl Default for WslsAgent {
    fn default() -> Self {
        Self::new(Arm::X)
    }
}

impl Agent for WslsAgent {
    fn name(&self) -> String {
        "wsls".into()
    }

    fn choose(&mut self, history: &History) -> Choice {
        match history.last_valid() {
            None => self.first.into(),
            Some((arm, 1)) => arm.into(),
            Some((arm, _)) => arm.other().into(),
        }
    }
}

/// Rescorla-Wagner learner with a logistic (two-arm softmax) policy.
#[derive(Debug, Clone)]
pub struct RwAgent {
    pub params: RWParams,
    values: [f64; 2],
    prime_x: bool,
    rng: Rng,
}

impl RwAgent {
    /// `prime_x` forces X on the first trial; values still start at 0.
    pub fn new(params: RWParams, prime_x: bool, seed: u64) -> Self {
        Self { params, values: [0.0; 2], prime_x, rng: rng::seeded(seed) }
    }

    pub fn values(&self) -> (f64, f64) {
        (self.values[0], self.values[1])
    }

    pub fn set_values(&mut self, v_x: f64, v_y: f64) {
        self.values = [v_x, v_y];
    }

    /// Current softmax probability of choosing Y.
    pub fn prob_y(&self) -> f64 {
        rw_model::logistic(self.params.tau * (self.values[1] - self.values[0]))
    }

    /// Delta-rule update of the chosen arm. Invalid choices are a no-op.
    pub fn update(&mut self, choice: Choice, reward: u8) {
        if let Some(arm) = choice.arm() {
            let v = &mut self.values[arm.index()];
            *v += self.params.a * (f64::from(reward) - *v);
        }
    }
}

impl Agent for RwAgent {
    fn name(&self) -> String {
        format!("rw(a={},tau={})", self.params.a, self.params.tau)
    }

    fn choose(&mut self, history: &History) -> Choice {
        if self.prime_x && history.is_empty() {
            return Choice::X;
        }
        let p_y = self.prob_y();
        if rng::bernoulli(&mut self.rng, p_y) {
            Choice::Y
        } else {
            Choice::X
        }
    }

    fn observe(&mut self, choice: Choice, reward: u8) {
        self.update(choice, reward);
    }
}

/// Serializable description of a synthetic agent, as used in plan files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticAgent {
    Random,
    Oracle,
    EpsilonGreedy {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    Wsls {
        #[serde(default = "default_true")]
        first_x: bool,
    },
    Rw {
        a: f64,
        tau: f64,
        #[serde(default)]
        prime_x: bool,
    },
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_true() -> bool {
    true
}

impl SyntheticAgent {
    /// Short identifier used in condition ids.
    pub fn label(&self) -> String {
        match self {
            SyntheticAgent::Random => "random".into(),
            SyntheticAgent::Oracle => "oracle".into(),
            SyntheticAgent::EpsilonGreedy { epsilon } => format!("egreedy{epsilon}"),
            SyntheticAgent::Wsls { first_x } => {
                if *first_x {
                    "wsls".into()
                } else {
                    "wsls_y".into()
                }
            }
            SyntheticAgent::Rw { a, tau, prime_x } => {
                format!("rw_a{a}_tau{tau}{}", if *prime_x { "_px" } else { "" })
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SyntheticAgent::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                Err(Error::invalid(format!("epsilon {epsilon} outside [0, 1]")))
            }
            SyntheticAgent::Rw { a, tau, .. } => RWParams::new(a, tau).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn build(&self, structure: &RewardStructure, seed: u64) -> Result<Box<dyn Agent>> {
        Ok(match *self {
            SyntheticAgent::Random => Box::new(RandomAgent::new(seed)),
            SyntheticAgent::Oracle => Box::new(OracleAgent::new(structure)),
            SyntheticAgent::EpsilonGreedy { epsilon } => {
                Box::new(EpsilonGreedyAgent::new(epsilon, seed)?)
            }
            SyntheticAgent::Wsls { first_x } => {
                Box::new(WslsAgent::new(if first_x { Arm::X } else { Arm::Y }))
            }
            SyntheticAgent::Rw { a, tau, prime_x } => {
                Box::new(RwAgent::new(RWParams::new(a, tau)?, prime_x, seed))
            }
        })
    }
}

/// Synthetic participants drawn from the hierarchical model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub hyper: GroupHyper,
    pub n_runs: usize,
    pub n_trials: usize,
    pub structure: RewardStructure,
    #[serde(default)]
    pub prime_x: bool,
}

impl CohortSpec {
    pub fn condition_id(&self) -> String {
        format!("cohort__{}", self.structure.label)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.n_trials == 0 {
            return Err(Error::invalid("cohort needs at least one trial per run"));
        }
        Ok(())
    }
}

/// A simulated run together with the parameters that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortRun {
    pub params: RWParams,
    pub log: RunLog,
}

/// Simulates `spec.n_runs` Rescorla-Wagner participants. Each run draws its
/// latent offsets, environment and policy noise from its own derived seed.
pub fn simulate_cohort(spec: &CohortSpec, env_seed: u64) -> Result<Vec<CohortRun>> {
    spec.validate()?;
    let condition_id = spec.condition_id();
    let cond_seed = rng::condition_seed(env_seed, &condition_id);
    let runs = (0..spec.n_runs)
        .map(|run_id| {
            let seed = rng::run_seed(cond_seed, run_id as u64);
            let mut param_rng = rng::seeded(rng::derive_seed(seed, rng::PARAM_STREAM));
            let z_a: f64 = StandardNormal.sample(&mut param_rng);
            let z_tau: f64 = StandardNormal.sample(&mut param_rng);
            let params = rw_model::transform(&spec.hyper, z_a, z_tau);
            let mut env = BanditEnv::new(
                spec.structure.clone(),
                rng::derive_seed(seed, rng::ENV_STREAM),
            );
            let mut agent =
                RwAgent::new(params, spec.prime_x, rng::derive_seed(seed, rng::AGENT_STREAM));
            let log = session::play(
                &mut agent,
                &mut env,
                spec.n_trials,
                &condition_id,
                run_id as u64,
            );
            CohortRun { params, log }
        })
        .collect();
    Ok(runs)
}
