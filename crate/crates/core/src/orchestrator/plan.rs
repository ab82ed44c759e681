//! Experiment plans and their factorial expansion into conditions.
//!
//! ```toml
//! n_runs = 200
//! n_trials = 100
//! warmup = 10
//! master_seed = 7
//! reward_structures = ["symmetric", "asymmetric", { p_x = 0.6, p_y = 0.4 }]
//! decoding_configs = ["strict", "moderate", "default-like", "exploratory"]
//!
//! [[agents]]
//! kind = "oracle"
//!
//! [[agents]]
//! kind = "rw"
//! a = 0.15
//! tau = 4.9
//! prime_x = true
//!
//! [[agents]]
//! kind = "llm"
//! label = "mock"
//! mock_script = "tokens.txt"
//! ```
//!
//! LLM agents take either `mock_script` or a `[agents.provider]` table
//! (see [`ProviderConfig`]). Decoding configs only multiply LLM agents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::SyntheticAgent;
use crate::bandit::{self, RewardStructure};
use crate::error::{Error, Result};
use crate::llm::{DecodingConfig, ProviderConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmKind {
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmAgentSpec {
    pub kind: LlmKind,
    pub label: String,
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
    #[serde(default)]
    pub provider: Option<ProviderConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentSpec {
    Synthetic(SyntheticAgent),
    Llm(LlmAgentSpec),
}

impl AgentSpec {
    pub fn label(&self) -> String {
        match self {
            AgentSpec::Synthetic(s) => s.label(),
            AgentSpec::Llm(l) => l.label.clone(),
        }
    }

    pub fn is_llm(&self) -> bool {
        matches!(self, AgentSpec::Llm(_))
    }

    fn validate(&self) -> Result<()> {
        match self {
            AgentSpec::Synthetic(s) => s.validate(),
            AgentSpec::Llm(l) => {
                if l.label.is_empty() {
                    return Err(Error::invalid("LLM agents need a non-empty label"));
                }
                match (&l.mock_script, &l.provider) {
                    (Some(_), None) => Ok(()),
                    (None, Some(p)) => p.validate(),
                    _ => Err(Error::invalid(format!(
                        "LLM agent `{}` needs exactly one of mock_script or provider",
                        l.label
                    ))),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RewardSpec {
    Preset(String),
    Custom { p_x: f64, p_y: f64 },
}

/// Label given to non-preset structures; [`structure_from_label`] reads it back.
pub fn custom_label(p_x: f64, p_y: f64) -> String {
    format!("custom_{p_x}_{p_y}")
}

/// Inverse of the labels written to run logs.
pub fn structure_from_label(label: &str) -> Result<RewardStructure> {
    if let Some(rest) = label.strip_prefix("custom_") {
        let parsed = rest
            .split_once('_')
            .and_then(|(x, y)| Some((x.parse::<f64>().ok()?, y.parse::<f64>().ok()?)));
        return match parsed {
            Some((p_x, p_y)) => RewardStructure::new(p_x, p_y, label),
            None => Err(Error::UnknownPreset(label.to_string())),
        };
    }
    bandit::preset(label)
}

impl RewardSpec {
    pub fn resolve(&self) -> Result<RewardStructure> {
        match self {
            RewardSpec::Preset(name) => bandit::preset(name),
            RewardSpec::Custom { p_x, p_y } => RewardStructure::new(*p_x, *p_y, custom_label(*p_x, *p_y)),
        }
    }
}

fn default_runs() -> usize {
    200
}
fn default_trials() -> usize {
    100
}
fn default_warmup() -> usize {
    crate::metrics::DEFAULT_WARMUP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub agents: Vec<AgentSpec>,
    pub reward_structures: Vec<RewardSpec>,
    #[serde(default)]
    pub decoding_configs: Vec<String>,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default)]
    pub master_seed: u64,
}

/// One cell of the factorial design.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub condition_id: String,
    pub agent_index: usize,
    pub agent: AgentSpec,
    pub structure: RewardStructure,
    pub decoding: Option<DecodingConfig>,
}

/// Keeps condition ids usable as file names.
pub fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '-' })
        .collect()
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Reads a plan file; relative mock-script paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut plan = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for agent in &mut plan.agents {
            if let AgentSpec::Llm(LlmAgentSpec { mock_script: Some(p), .. }) = agent {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::invalid("plan lists no agents"));
        }
        if self.reward_structures.is_empty() {
            return Err(Error::invalid("plan lists no reward structures"));
        }
        if self.n_trials == 0 {
            return Err(Error::invalid("n_trials must be at least 1"));
        }
        if self.warmup >= self.n_trials {
            return Err(Error::invalid(format!(
                "warmup {} must be shorter than n_trials {}",
                self.warmup, self.n_trials
            )));
        }
        for a in &self.agents {
            a.validate()?;
        }
        for r in &self.reward_structures {
            r.resolve()?;
        }
        for d in &self.decoding_configs {
            DecodingConfig::preset(d)?;
        }
        if self.agents.iter().any(AgentSpec::is_llm) && self.decoding_configs.is_empty() {
            return Err(Error::invalid("LLM agents need at least one decoding config"));
        }
        let conditions = self.conditions()?;
        let mut ids: Vec<&str> = conditions.iter().map(|c| c.condition_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate condition id `{}`", w[0])));
        }
        Ok(())
    }

    /// Agents x structures x (decodings for LLM agents, else 1), in plan order.
    pub fn conditions(&self) -> Result<Vec<Condition>> {
        let decodings = self
            .decoding_configs
            .iter()
            .map(|d| DecodingConfig::preset(d))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::new();
        for (agent_index, agent) in self.agents.iter().enumerate() {
            for spec in &self.reward_structures {
                let structure = spec.resolve()?;
                let base = format!("{}__{}", agent.label(), structure.label);
                if agent.is_llm() {
                    for d in &decodings {
                        out.push(Condition {
                            condition_id: sanitize(&format!("{base}__{}", d.label.to_lowercase())),
                            agent_index,
                            agent: agent.clone(),
                            structure: structure.clone(),
                            decoding: Some(d.clone()),
                        });
                    }
                } else {
                    out.push(Condition {
                        condition_id: sanitize(&base),
                        agent_index,
                        agent: agent.clone(),
                        structure,
                        decoding: None,
                    });
                }
            }
        }
        Ok(out)
    }
}
