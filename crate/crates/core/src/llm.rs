//! Chat-completion client for the bandit prompt protocol.
//!
//! Each trial is one request with `max_tokens = 1`. The reply is stripped of
//! surrounding whitespace and must then be exactly `X` or `Y`; anything else,
//! and any request that still fails after retries, becomes an invalid trial.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Choice, History};
use crate::error::{Error, Result};

pub const SYSTEM_PROMPT: &str = "You are a space explorer in a game. \
Your task is to choose between visiting Planet X or Planet Y in each round, \
aiming to find as many gold coins as possible. \
The probability of finding gold coins on each planet is unknown at the start, \
but you can learn and adjust your strategy based on the outcomes of your previous visits. \
Respond with 'X' for Planet X or 'Y' for Planet Y.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub label: String,
}

impl DecodingConfig {
    pub fn new(temperature: f64, top_p: f64, label: impl Into<String>) -> Result<Self> {
        let d = Self { temperature, top_p, label: label.into() };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature {} must be >= 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::invalid(format!("top_p {} must lie in (0, 1]", self.top_p)));
        }
        Ok(())
    }

    pub fn strict() -> Self {
        Self { temperature: 0.0, top_p: 0.5, label: "Strict".into() }
    }

    pub fn moderate() -> Self {
        Self { temperature: 1.0, top_p: 0.5, label: "Moderate".into() }
    }

    pub fn default_like() -> Self {
        Self { temperature: 1.0, top_p: 1.0, label: "Default-like".into() }
    }

    pub fn exploratory() -> Self {
        Self { temperature: 2.0, top_p: 1.0, label: "Exploratory".into() }
    }

    pub fn presets() -> [Self; 4] {
        [Self::strict(), Self::moderate(), Self::default_like(), Self::exploratory()]
    }

    /// Case-insensitive lookup; `default` and `default_like` also name the
    /// third preset.
    pub fn preset(name: &str) -> Result<Self> {
        let key = name.to_ascii_lowercase().replace('_', "-");
        match key.as_str() {
            "strict" => Ok(Self::strict()),
            "moderate" => Ok(Self::moderate()),
            "default-like" | "default" => Ok(Self::default_like()),
            "exploratory" => Ok(Self::exploratory()),
            _ => Err(Error::UnknownDecoding(name.to_string())),
        }
    }
}

fn default_max_retries() -> u32 {
    3
}
fn default_timeout() -> f64 {
    30.0
}
fn default_backoff() -> u64 {
    500
}
fn default_in_flight() -> usize {
    4
}

/// Where and how to reach a chat-completions endpoint. The key itself is
/// never stored here, only the name of the variable that holds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key_env_var: String,
    /// Total attempts per request, the first one included.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Delay before the second attempt; doubles after each failure.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub min_interval_ms: u64,
}

impl ProviderConfig {
    pub fn new(endpoint_url: &str, model_name: &str, api_key_env_var: &str) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            api_key_env_var: api_key_env_var.into(),
            max_retries: default_max_retries(),
            timeout_secs: default_timeout(),
            backoff_ms: default_backoff(),
            max_in_flight: default_in_flight(),
            min_interval_ms: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_retries == 0 {
            return Err(Error::invalid("max_retries must be at least 1"));
        }
        if self.max_in_flight == 0 {
            return Err(Error::invalid("max_in_flight must be at least 1"));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::invalid("timeout_secs must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

fn outcome_text(reward: u8) -> &'static str {
    if reward == 1 {
        "100 gold coins"
    } else {
        "nothing"
    }
}

/// The two messages for trial `next_trial`, which must follow the history.
pub fn render_prompt(history: &History, next_trial: usize) -> Result<Prompt> {
    if next_trial != history.len() + 1 {
        return Err(Error::invalid(format!(
            "next trial {next_trial} does not follow a history of {} trials",
            history.len()
        )));
    }
    let mut user = String::new();
    if !history.is_empty() {
        user.push_str("Your previous space travels went as follows:\n");
        for e in history.entries() {
            let line = match e.choice {
                Choice::Invalid => format!(
                    "- In Trial {}, you did not choose a planet and found nothing.\n",
                    e.trial
                ),
                c => format!(
                    "- In Trial {}, you went to Planet {} and found {}.\n",
                    e.trial,
                    c.as_str(),
                    outcome_text(e.reward)
                ),
            };
            user.push_str(&line);
        }
        user.push('\n');
    }
    user.push_str(&format!("Q: Which planet do you want to go to in Trial {next_trial}?\nA: Planet"));
    Ok(Prompt { system: SYSTEM_PROMPT.to_string(), user })
}

/// Exactly `X` or `Y` after trimming whitespace; everything else is invalid.
pub fn parse_choice(raw: &str) -> Choice {
    match raw.trim() {
        "X" => Choice::X,
        "Y" => Choice::Y,
        _ => Choice::Invalid,
    }
}

/// Wire-level request, independent of the provider.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    /// 1-based trial this request belongs to.
    pub trial: usize,
}

impl ChatRequest {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": self.system},
                {"role": "user", "content": self.user},
            ],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderError {
    /// Worth retrying.
    Transport(String),
    /// Not retried.
    Auth(String),
}

pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;

    fn send(&self, request: &ChatRequest) -> std::result::Result<String, ProviderError>;
}

/// OpenAI-style `/chat/completions` over blocking HTTP.
pub struct HttpProvider {
    config: ProviderConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpProvider")
            .field("endpoint_url", &self.config.endpoint_url)
            .field("model_name", &self.config.model_name)
            .finish_non_exhaustive()
    }
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env_var).map_err(|_| {
            Error::Authentication(format!("environment variable {} is not set", config.api_key_env_var))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("HTTP client: {e}")))?;
        Ok(Self { config, api_key, client })
    }
}

fn extract_content(body: &serde_json::Value) -> Option<String> {
    let msg = body.get("choices")?.get(0)?;
    msg.get("message")
        .and_then(|m| m.get("content"))
        .or_else(|| msg.get("text"))
        .and_then(|c| c.as_str())
        .map(str::to_owned)
}

impl ChatProvider for HttpProvider {
    fn name(&self) -> &str {
        &self.config.model_name
    }

    fn send(&self, request: &ChatRequest) -> std::result::Result<String, ProviderError> {
        let resp = self
            .client
            .post(&self.config.endpoint_url)
            .bearer_auth(&self.api_key)
            .json(&request.to_json())
            .send()
            .map_err(|e| ProviderError::Transport(e.without_url().to_string()))?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(ProviderError::Auth(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(ProviderError::Transport(format!("HTTP {status}")));
        }
        let body: serde_json::Value =
            resp.json().map_err(|e| ProviderError::Transport(format!("bad response body: {e}")))?;
        // an empty completion is a valid (invalid-choice) answer, not a transport error
        Ok(extract_content(&body).unwrap_or_default())
    }
}

/// Offline provider replaying a token script. Trial `k` gets line
/// `(k - 1) mod len`, so every run sharing the mock sees the same sequence.
#[derive(Debug, Default)]
pub struct MockProvider {
    script: Vec<String>,
    failures: Mutex<VecDeque<ProviderError>>,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new(tokens: impl IntoIterator<Item = impl Into<String>>) -> Result<Self> {
        let script: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if script.is_empty() {
            return Err(Error::invalid("mock script is empty"));
        }
        Ok(Self { script, ..Default::default() })
    }

    /// One token per line. Lines are kept verbatim (minus the newline).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines())
    }

    /// Queues errors returned by the next calls, before any script token.
    pub fn fail_next(&self, errors: impl IntoIterator<Item = ProviderError>) {
        self.failures.lock().expect("mock lock").extend(errors);
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn send(&self, request: &ChatRequest) -> std::result::Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(err) = self.failures.lock().expect("mock lock").pop_front() {
            return Err(err);
        }
        let idx = request.trial.saturating_sub(1) % self.script.len();
        Ok(self.script[idx].clone())
    }
}

/// In-flight cap plus a minimum spacing between request starts.
#[derive(Debug)]
pub struct RateLimiter {
    max_in_flight: usize,
    min_interval: Duration,
    in_flight: Mutex<usize>,
    freed: Condvar,
    last_start: Mutex<Option<Instant>>,
}

pub struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock().expect("limiter lock");
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}

impl RateLimiter {
    pub fn new(max_in_flight: usize, min_interval: Duration) -> Self {
        Self {
            max_in_flight: max_in_flight.max(1),
            min_interval,
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            last_start: Mutex::new(None),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limiter lock");
        while *n >= self.max_in_flight {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        drop(n);
        if !self.min_interval.is_zero() {
            let mut last = self.last_start.lock().expect("limiter lock");
            if let Some(prev) = *last {
                let ready = prev + self.min_interval;
                let now = Instant::now();
                if ready > now {
                    std::thread::sleep(ready - now);
                }
            }
            *last = Some(Instant::now());
        }
        Permit { limiter: self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatExchange {
    pub system_text: String,
    pub user_text: String,
    pub raw_response: String,
    pub parsed: Choice,
    pub latency_ms: f64,
    pub attempts: u32,
}

/// A provider with retry, rate-limit and request-budget policy.
pub struct LlmClient {
    provider: Arc<dyn ChatProvider>,
    config: ProviderConfig,
    limiter: RateLimiter,
    budget: Option<usize>,
    used: AtomicUsize,
}

impl fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmClient")
            .field("provider", &self.provider.name())
            .field("budget", &self.budget)
            .field("used", &self.used)
            .finish()
    }
}

impl LlmClient {
    pub fn new(provider: Arc<dyn ChatProvider>, config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        let limiter =
            RateLimiter::new(config.max_in_flight, Duration::from_millis(config.min_interval_ms));
        Ok(Self { provider, config, limiter, budget: None, used: AtomicUsize::new(0) })
    }

    /// Caps the number of requests (attempts, retries included).
    pub fn with_budget(mut self, max_requests: usize) -> Self {
        self.budget = Some(max_requests);
        self
    }

    pub fn requests_used(&self) -> usize {
        self.used.load(Ordering::SeqCst)
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    fn take_budget(&self) -> Result<()> {
        let n = self.used.fetch_add(1, Ordering::SeqCst);
        match self.budget {
            Some(max) if n >= max => {
                self.used.fetch_sub(1, Ordering::SeqCst);
                Err(Error::BudgetExhausted(max))
            }
            _ => Ok(()),
        }
    }

    /// Sends one prompt, retrying transport failures with exponential backoff.
    pub fn complete(&self, decoding: &DecodingConfig, prompt: &Prompt, trial: usize) -> Result<ChatExchange> {
        let request = ChatRequest {
            model: self.config.model_name.clone(),
            system: prompt.system.clone(),
            user: prompt.user.clone(),
            temperature: decoding.temperature,
            top_p: decoding.top_p,
            max_tokens: 1,
            trial,
        };
        let start = Instant::now();
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last = String::new();
        for attempt in 1..=self.config.max_retries {
            self.take_budget()?;
            let result = {
                let _permit = self.limiter.acquire();
                self.provider.send(&request)
            };
            match result {
                Ok(raw) => {
                    return Ok(ChatExchange {
                        system_text: request.system,
                        user_text: request.user,
                        parsed: parse_choice(&raw),
                        raw_response: raw,
                        latency_ms: start.elapsed().as_secs_f64() * 1e3,
                        attempts: attempt,
                    })
                }
                Err(ProviderError::Auth(msg)) => return Err(Error::Authentication(msg)),
                Err(ProviderError::Transport(msg)) => {
                    log::warn!("{} trial {trial} attempt {attempt}: {msg}", self.provider.name());
                    last = msg;
                    if attempt < self.config.max_retries && !delay.is_zero() {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(Error::TransportExhausted { attempts: self.config.max_retries, message: last })
    }
}

/// Agent backed by a chat model. Failed requests become invalid trials.
pub struct LlmAgent {
    client: Arc<LlmClient>,
    decoding: DecodingConfig,
    last_raw: Option<String>,
}

impl LlmAgent {
    pub fn new(client: Arc<LlmClient>, decoding: DecodingConfig) -> Self {
        Self { client, decoding, last_raw: None }
    }
}

impl Agent for LlmAgent {
    fn name(&self) -> String {
        format!("llm:{}", self.client.provider_name())
    }

    fn choose(&mut self, history: &History) -> Choice {
        let trial = history.len() + 1;
        let prompt = match render_prompt(history, trial) {
            Ok(p) => p,
            Err(e) => {
                log::error!("prompt rendering failed: {e}");
                self.last_raw = None;
                return Choice::Invalid;
            }
        };
        match self.client.complete(&self.decoding, &prompt, trial) {
            Ok(ex) => {
                self.last_raw = Some(ex.raw_response);
                ex.parsed
            }
            Err(e) => {
                log::warn!("trial {trial} recorded as invalid: {e}");
                self.last_raw = None;
                Choice::Invalid
            }
        }
    }

    fn last_raw_token(&self) -> Option<&str> {
        self.last_raw.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Choice::*;

    const EXAMPLE_USER: &str = "Your previous space travels went as follows:\n\
- In Trial 1, you went to Planet X and found 100 gold coins.\n\
- In Trial 2, you went to Planet X and found nothing.\n\
- In Trial 3, you went to Planet Y and found nothing.\n\
\n\
Q: Which planet do you want to go to in Trial 4?\n\
A: Planet";

    fn quick_config() -> ProviderConfig {
        ProviderConfig { backoff_ms: 0, ..ProviderConfig::new("mock://", "mock", "UNUSED") }
    }

    fn client(mock: Arc<MockProvider>) -> LlmClient {
        LlmClient::new(mock, quick_config()).unwrap()
    }

    #[test]
    fn example_prompt() {
        let h = History::from_pairs(&[(X, 1), (X, 0), (Y, 0)]);
        let p = render_prompt(&h, 4).unwrap();
        assert_eq!(p.user, EXAMPLE_USER);
        assert!(p.system.starts_with("You are a space explorer in a game. Your task"));
        assert!(p.system.ends_with("Respond with 'X' for Planet X or 'Y' for Planet Y."));
    }

    #[test]
    fn first_trial_prompt() {
        let p = render_prompt(&History::new(), 1).unwrap();
        assert_eq!(p.user, "Q: Which planet do you want to go to in Trial 1?\nA: Planet");
    }

    #[test]
    fn single_reward_line() {
        let p = render_prompt(&History::from_pairs(&[(Y, 1)]), 2).unwrap();
        assert!(p.user.contains("- In Trial 1, you went to Planet Y and found 100 gold coins.\n"));
        assert!(render_prompt(&History::new(), 3).is_err());
    }

    #[test]
    fn parser() {
        assert_eq!(parse_choice("X"), X);
        assert_eq!(parse_choice(" Y"), Y);
        assert_eq!(parse_choice("Y\n"), Y);
        for s in ["Z", "x", "y", "", "Planet", "XY", "X.", " "] {
            assert_eq!(parse_choice(s), Invalid, "{s:?}");
        }
    }

    #[test]
    fn presets_match_table() {
        let got: Vec<(f64, f64)> = DecodingConfig::presets().iter().map(|d| (d.temperature, d.top_p)).collect();
        assert_eq!(got, vec![(0.0, 0.5), (1.0, 0.5), (1.0, 1.0), (2.0, 1.0)]);
        assert_eq!(DecodingConfig::preset("default").unwrap(), DecodingConfig::default_like());
        assert!(DecodingConfig::preset("greedy").is_err());
        assert!(DecodingConfig::new(1.0, 0.0, "bad").is_err());
    }

    #[test]
    fn mock_tokens() {
        let c = client(Arc::new(MockProvider::new(["X", "Planet"]).unwrap()));
        let p = render_prompt(&History::new(), 1).unwrap();
        let ex = c.complete(&DecodingConfig::strict(), &p, 1).unwrap();
        assert_eq!((ex.parsed, ex.attempts), (X, 1));
        assert!(ex.latency_ms >= 0.0);
        let ex = c.complete(&DecodingConfig::strict(), &p, 2).unwrap();
        assert_eq!(ex.parsed, Invalid);
        assert_eq!(ex.raw_response, "Planet");
    }

    #[test]
    fn retries_then_succeeds() {
        let mock = Arc::new(MockProvider::new(["Y"]).unwrap());
        mock.fail_next(vec![ProviderError::Transport("reset".into()); 2]);
        let c = client(mock.clone());
        let p = render_prompt(&History::new(), 1).unwrap();
        let ex = c.complete(&DecodingConfig::strict(), &p, 1).unwrap();
        assert_eq!((ex.parsed, ex.attempts), (Y, 3));
        assert_eq!(mock.calls(), 3);
    }

    #[test]
    fn exhausted_and_auth() {
        let mock = Arc::new(MockProvider::new(["Y"]).unwrap());
        mock.fail_next(vec![ProviderError::Transport("down".into()); 3]);
        let c = client(mock.clone());
        let p = render_prompt(&History::new(), 1).unwrap();
        let err = c.complete(&DecodingConfig::strict(), &p, 1).unwrap_err();
        assert!(matches!(err, Error::TransportExhausted { attempts: 3, .. }), "{err}");

        mock.fail_next([ProviderError::Auth("401".into())]);
        let before = mock.calls();
        assert!(matches!(c.complete(&DecodingConfig::strict(), &p, 1), Err(Error::Authentication(_))));
        assert_eq!(mock.calls(), before + 1);
    }

    #[test]
    fn budget_caps_requests() {
        let c = client(Arc::new(MockProvider::new(["X"]).unwrap())).with_budget(2);
        let p = render_prompt(&History::new(), 1).unwrap();
        assert!(c.complete(&DecodingConfig::strict(), &p, 1).is_ok());
        assert!(c.complete(&DecodingConfig::strict(), &p, 1).is_ok());
        assert!(matches!(c.complete(&DecodingConfig::strict(), &p, 1), Err(Error::BudgetExhausted(2))));
        assert_eq!(c.requests_used(), 2);
    }

    #[test]
    fn agent_degrades_failures_to_invalid() {
        let mock = Arc::new(MockProvider::new(["X"]).unwrap());
        mock.fail_next(vec![ProviderError::Transport("down".into()); 3]);
        let mut agent = LlmAgent::new(Arc::new(client(mock)), DecodingConfig::strict());
        assert_eq!(agent.choose(&History::new()), Invalid);
        assert_eq!(agent.last_raw_token(), None);
        assert_eq!(agent.choose(&History::from_pairs(&[(Invalid, 0)])), X);
        assert_eq!(agent.last_raw_token(), Some("X"));
    }

    #[test]
    fn invalid_history_line() {
        let p = render_prompt(&History::from_pairs(&[(Invalid, 0)]), 2).unwrap();
        assert!(p.user.contains("- In Trial 1, you did not choose a planet and found nothing.\n"));
    }

    #[test]
    fn request_body_shape() {
        let r = ChatRequest {
            model: "m".into(),
            system: "s".into(),
            user: "u".into(),
            temperature: 1.0,
            top_p: 0.5,
            max_tokens: 1,
            trial: 1,
        };
        let j = r.to_json();
        assert_eq!(j["max_tokens"], 1);
        assert_eq!(j["messages"][0]["role"], "system");
        assert_eq!(j["messages"][1]["content"], "u");
        assert_eq!(j["top_p"], 0.5);
    }

    #[test]
    fn missing_key_is_auth_error() {
        let cfg = ProviderConfig::new("http://127.0.0.1:9", "m", "BANDITPROBE_SURELY_UNSET_KEY");
        assert!(matches!(HttpProvider::new(cfg), Err(Error::Authentication(_))));
    }

    #[test]
    fn content_extraction() {
        let body = serde_json::json!({"choices": [{"message": {"content": " X"}}]});
        assert_eq!(extract_content(&body).as_deref(), Some(" X"));
        assert_eq!(extract_content(&serde_json::json!({})), None);
    }
}
