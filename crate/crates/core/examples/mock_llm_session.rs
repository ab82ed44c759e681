//! One LLM session against a scripted mock provider: the prompt sent on
//! each trial, the raw token, and how it was scored.
//!
//!     cargo run --example mock_llm_session

use std::sync::Arc;

use banditprobe::llm::{render_prompt, DecodingConfig, LlmAgent, LlmClient, MockProvider, ProviderConfig};
use banditprobe::{rng, session, BanditEnv, RewardStructure};

fn main() -> banditprobe::Result<()> {
    let script = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/tokens.txt");
    let mock = Arc::new(MockProvider::from_file(&script)?);
    let config = ProviderConfig { backoff_ms: 0, ..ProviderConfig::new("mock://", "mock", "UNUSED") };
    let client = Arc::new(LlmClient::new(mock.clone(), config)?);

    let decoding = DecodingConfig::strict();
    let mut agent = LlmAgent::new(client, decoding.clone());
    let mut env = BanditEnv::new(RewardStructure::asymmetric(), rng::derive_seed(1, rng::ENV_STREAM));
    let log = session::play(&mut agent, &mut env, 8, "mock__asymmetric__strict", 0);

    let history = banditprobe::History::from_pairs(
        &log.trials[..3].iter().map(|t| (t.choice, t.reward)).collect::<Vec<_>>(),
    );
    let prompt = render_prompt(&history, 4)?;
    println!("system: {}\n\n{}\n", prompt.system, prompt.user);
    println!("decoding: {} (temperature {}, top-p {})", decoding.label, decoding.temperature, decoding.top_p);
    for t in &log.trials {
        println!(
            "trial {:>2}: raw {:<10} -> {:<7} reward {}",
            t.trial,
            format!("{:?}", t.raw_token.as_deref().unwrap_or("")),
            t.choice.as_str(),
            t.reward
        );
    }
    println!("invalid rate {:.3}, provider calls {}", log.invalid_count() as f64 / log.trials.len() as f64, mock.calls());
    Ok(())
}
