//! Trial and run logs, and the loop that plays one run.

use crate::agents::{Agent, Choice, History};
use crate::bandit::{BanditEnv, RewardStructure};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    /// 1-based.
    pub trial: u32,
    pub choice: Choice,
    pub reward: u8,
    pub raw_token: Option<String>,
}

/// One run of `T` trials under a single condition.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub condition_id: String,
    pub run_id: u64,
    pub structure: RewardStructure,
    pub trials: Vec<TrialRecord>,
}

impl RunLog {
    /// Builds a log from `(choice, reward)` pairs; handy for tests and examples.
    pub fn from_pairs(structure: RewardStructure, pairs: &[(Choice, u8)]) -> Self {
        let trials = pairs
            .iter()
            .enumerate()
            .map(|(i, &(choice, reward))| TrialRecord {
                trial: i as u32 + 1,
                choice,
                reward: if choice.is_valid() { reward } else { 0 },
                raw_token: None,
            })
            .collect();
        Self { condition_id: String::new(), run_id: 0, structure, trials }
    }

    pub fn invalid_count(&self) -> usize {
        self.trials.iter().filter(|t| !t.choice.is_valid()).count()
    }
}

/// Plays `n_trials` trials of `agent` against `env`.
pub fn play(
    agent: &mut dyn Agent,
    env: &mut BanditEnv,
    n_trials: usize,
    condition_id: &str,
    run_id: u64,
) -> RunLog {
    let mut history = History::new();
    let mut trials = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let choice = agent.choose(&history);
        let raw_token = agent.last_raw_token().map(str::to_owned);
        let reward = env.draw_reward(choice).reward;
        agent.observe(choice, reward);
        history.push(choice, reward);
        trials.push(TrialRecord { trial: history.len() as u32, choice, reward, raw_token });
    }
    RunLog {
        condition_id: condition_id.to_string(),
        run_id,
        structure: env.structure().clone(),
        trials,
    }
}
