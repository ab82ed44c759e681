//! Seeded two-arm Bernoulli bandit.

use serde::{Deserialize, Serialize};

use crate::agents::{Arm, Choice};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Reward probabilities of arms X and Y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardStructure {
    pub p_x: f64,
    pub p_y: f64,
    pub label: String,
}

impl RewardStructure {
    pub fn new(p_x: f64, p_y: f64, label: impl Into<String>) -> Result<Self> {
        for (name, p) in [("p_x", p_x), ("p_y", p_y)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} is not a probability")));
            }
        }
        let label = label.into();
        if label.is_empty() {
            return Err(Error::invalid("reward structure label must not be empty"));
        }
        Ok(Self { p_x, p_y, label })
    }

    /// Equal arm probabilities, 0.25 each.
    pub fn symmetric() -> Self {
        Self { p_x: 0.25, p_y: 0.25, label: "symmetric".into() }
    }

    /// Arm X superior: 0.75 against 0.25.
    pub fn asymmetric() -> Self {
        Self { p_x: 0.75, p_y: 0.25, label: "asymmetric".into() }
    }

    pub fn p(&self, arm: Arm) -> f64 {
        match arm {
            Arm::X => self.p_x,
            Arm::Y => self.p_y,
        }
    }

    pub fn is_asymmetric(&self) -> bool {
        self.p_x != self.p_y
    }

    /// The higher-probability arm. Ties resolve to X, which is also the
    /// conventional target under a symmetric structure.
    pub fn target_arm(&self) -> Arm {
        if self.p_y > self.p_x {
            Arm::Y
        } else {
            Arm::X
        }
    }
}

/// Looks up a named reward structure.
pub fn preset(name: &str) -> Result<RewardStructure> {
    match name {
        "symmetric" => Ok(RewardStructure::symmetric()),
        "asymmetric" => Ok(RewardStructure::asymmetric()),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub reward: u8,
}

/// One run's environment. Rewards are drawn on demand per choice.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    structure: RewardStructure,
    rng: Rng,
}

impl BanditEnv {
    pub fn new(structure: RewardStructure, seed: u64) -> Self {
        Self { structure, rng: rng::seeded(seed) }
    }

    pub fn structure(&self) -> &RewardStructure {
        &self.structure
    }

    /// Draws the reward for `choice`. Invalid choices pay 0 and leave the
    /// generator untouched; valid choices consume exactly one `u64`.
    pub fn draw_reward(&mut self, choice: Choice) -> TrialOutcome {
        let reward = match choice.arm() {
            Some(arm) => u8::from(rng::bernoulli(&mut self.rng, self.structure.p(arm))),
            None => 0,
        };
        TrialOutcome { reward }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn presets_match_design() {
        let s = preset("symmetric").unwrap();
        assert_eq!((s.p_x, s.p_y), (0.25, 0.25));
        let a = preset("asymmetric").unwrap();
        assert_eq!((a.p_x, a.p_y), (0.75, 0.25));
        assert!(matches!(preset("banana"), Err(Error::UnknownPreset(n)) if n == "banana"));
    }

    #[test]
    fn rejects_out_of_range_probability() {
        assert!(RewardStructure::new(1.2, 0.1, "bad").is_err());
        assert!(RewardStructure::new(0.5, -0.1, "bad").is_err());
    }

    #[test]
    fn degenerate_arm_always_pays() {
        let mut env = BanditEnv::new(RewardStructure::new(1.0, 0.0, "det").unwrap(), 3);
        for _ in 0..100 {
            assert_eq!(env.draw_reward(Choice::X).reward, 1);
            assert_eq!(env.draw_reward(Choice::Y).reward, 0);
        }
    }

    #[test]
    fn invalid_pays_nothing() {
        let mut env = BanditEnv::new(RewardStructure::new(1.0, 1.0, "rich").unwrap(), 3);
        assert_eq!(env.draw_reward(Choice::Invalid).reward, 0);
    }

    #[test]
    fn law_of_large_numbers_on_x() {
        let mut env = BanditEnv::new(RewardStructure::asymmetric(), 2024);
        let m = 100_000;
        let hits: u32 = (0..m).map(|_| u32::from(env.draw_reward(Choice::X).reward)).sum();
        let mean = f64::from(hits) / f64::from(m);
        assert!((0.74..=0.76).contains(&mean), "mean {mean}");
        let bound = 4.0 * (0.75f64 * 0.25 / f64::from(m)).sqrt();
        assert!((mean - 0.75).abs() < bound);
    }

    #[test]
    fn marginal_on_y() {
        let mut env = BanditEnv::new(RewardStructure::asymmetric(), 99);
        let m = 100_000;
        let hits: u32 = (0..m).map(|_| u32::from(env.draw_reward(Choice::Y).reward)).sum();
        let mean = f64::from(hits) / f64::from(m);
        assert!((mean - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / f64::from(m)).sqrt());
    }

    fn choice_strategy() -> impl Strategy<Value = Choice> {
        prop_oneof![Just(Choice::X), Just(Choice::Y), Just(Choice::Invalid)]
    }

    proptest! {
        #[test]
        fn identical_seeds_identical_rewards(
            seed in any::<u64>(),
            choices in prop::collection::vec(choice_strategy(), 0..200),
        ) {
            let mut a = BanditEnv::new(RewardStructure::asymmetric(), seed);
            let mut b = BanditEnv::new(RewardStructure::asymmetric(), seed);
            for c in &choices {
                prop_assert_eq!(a.draw_reward(*c), b.draw_reward(*c));
            }
        }

        #[test]
        fn invalid_choices_do_not_perturb_stream(
            seed in any::<u64>(),
            choices in prop::collection::vec(choice_strategy(), 0..200),
        ) {
            let mut with_invalid = BanditEnv::new(RewardStructure::symmetric(), seed);
            let mut without = BanditEnv::new(RewardStructure::symmetric(), seed);
            let a: Vec<u8> = choices
                .iter()
                .filter_map(|c| {
                    let r = with_invalid.draw_reward(*c).reward;
                    c.is_valid().then_some(r)
                })
                .collect();
            let b: Vec<u8> = choices
                .iter()
                .filter(|c| c.is_valid())
                .map(|c| without.draw_reward(*c).reward)
                .collect();
            prop_assert_eq!(a, b);
        }
    }
}
