//! Two-arm bandit probes for language models and synthetic agents.
//!
//! The crate covers the whole loop of a bandit-probe study:
//!
//! * [`bandit`]: seeded Bernoulli two-arm environment with symmetric and
//!   asymmetric reward structures.
//! * [`agents`]: the [`agents::Agent`] interface plus random, oracle,
//!   epsilon-greedy, win-stay-lose-shift and Rescorla-Wagner/softmax agents.
//! * [`llm`]: chat-completion client with the space-explorer prompt protocol,
//!   the four decoding presets, strict one-token parsing and a scripted mock.
//! * [`metrics`]: run-level behavioural indices and condition summaries with
//!   95% confidence intervals.
//! * [`rw_model`]: the hierarchical Rescorla-Wagner/softmax posterior and its
//!   exact gradient.
//! * [`inference`]: NUTS sampler, convergence diagnostics, posterior summaries,
//!   posterior predictives and ICC(3,1) reliability.
//! * [`orchestrator`]: experiment plans, run-log CSVs, fitting, reporting and
//!   parameter recovery, as driven by the `banditprobe` binary.
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example <name>`.

pub mod agents;
pub mod bandit;
pub mod error;
pub mod inference;
pub mod llm;
pub mod metrics;
pub mod orchestrator;
pub mod rng;
pub mod rw_model;
pub mod session;

pub use agents::{Agent, Choice, History, HistoryEntry};
pub use bandit::{BanditEnv, RewardStructure, TrialOutcome};
pub use error::{Error, Result};
