//! Chat-completion access: a backend trait with a live HTTP implementation
//! and deterministic scripted ones, wrapped by a [`Gateway`] that applies
//! per-role temperatures, rate limits and token accounting.

mod http;
mod scripted;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::AgentRole;
use crate::protocol::RenderedPrompt;
use crate::ratelimit::RateLimiter;

pub use http::{
    HttpBackend, HttpReply, HttpTransport, RetryPolicy, TransportError, UreqTransport, ENV_LLM_KEY,
    ENV_LLM_MODEL, ENV_LLM_URL,
};
pub use scripted::{FnBackend, ScriptedBackend};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no scripted fixture for {role} prompt (digest {digest})")]
    FixtureMiss { role: AgentRole, digest: String },
    #[error("transport failed after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: String },
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed provider reply: {0}")]
    Protocol(String),
    #[error("token budget exhausted ({used} used, limit {limit})")]
    BudgetExhausted { used: u64, limit: u64 },
    #[error("llm configuration: {0}")]
    Config(String),
    #[error("fixture io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid request: {0}")]
    Request(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            seed: Some(DEFAULT_SEED),
            max_tokens: None,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(LlmError::Request("prompts must be nonempty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Request(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// Transient failures retried before this reply arrived.
    pub retries: u32,
}

pub const DEFAULT_TEMPERATURE: f64 = 0.3;
pub const DEFAULT_SEED: u64 = 42;

pub trait ChatBackend: Send + Sync {
    fn complete(&self, role: AgentRole, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

/// Hex SHA-256 over the role name and both prompt parts. Scripted fixtures
/// are stored under this name.
pub fn prompt_digest(role: AgentRole, system: &str, user: &str) -> String {
    let mut h = Sha256::new();
    h.update(role.as_str().as_bytes());
    h.update([0u8]);
    h.update(system.as_bytes());
    h.update([0u8]);
    h.update(user.as_bytes());
    hex::encode(h.finalize())
}

/// Whitespace word count, the token estimate used by offline backends.
pub fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetDecision {
    Proceed,
    Halt,
}

pub fn budget_guard(accumulated: u64, limit: Option<u64>) -> BudgetDecision {
    match limit {
        Some(limit) if accumulated > limit || limit == 0 => BudgetDecision::Halt,
        _ => BudgetDecision::Proceed,
    }
}

/// Anything that can answer a rendered prompt with reply text. Evidence
/// helpers take this so callers can interpose tracing.
pub trait LlmCall: Sync {
    fn call(&self, prompt: &RenderedPrompt) -> Result<String, LlmError>;
}

impl LlmCall for Gateway {
    fn call(&self, prompt: &RenderedPrompt) -> Result<String, LlmError> {
        Ok(self.complete(prompt)?.response.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub digest: String,
    pub response: ChatResponse,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TokenUsage {
    pub calls: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub retries: u64,
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    default_temperature: f64,
    role_temperatures: BTreeMap<AgentRole, f64>,
    seed: Option<u64>,
    request_limiter: Option<RateLimiter>,
    token_limiter: Option<RateLimiter>,
    budget: Option<u64>,
    calls: AtomicU64,
    tokens_in: AtomicU64,
    tokens_out: AtomicU64,
    retries: AtomicU64,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            default_temperature: DEFAULT_TEMPERATURE,
            role_temperatures: BTreeMap::new(),
            seed: Some(DEFAULT_SEED),
            request_limiter: None,
            token_limiter: None,
            budget: None,
            calls: AtomicU64::new(0),
            tokens_in: AtomicU64::new(0),
            tokens_out: AtomicU64::new(0),
            retries: AtomicU64::new(0),
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.default_temperature = t;
        self
    }

    pub fn with_role_temperature(mut self, role: AgentRole, t: f64) -> Self {
        self.role_temperatures.insert(role, t);
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_request_limit(mut self, limiter: RateLimiter) -> Self {
        self.request_limiter = Some(limiter);
        self
    }

    pub fn with_token_limit(mut self, limiter: RateLimiter) -> Self {
        self.token_limiter = Some(limiter);
        self
    }

    pub fn with_budget(mut self, limit: Option<u64>) -> Self {
        self.budget = limit;
        self
    }

    pub fn temperature_for(&self, role: AgentRole) -> f64 {
        self.role_temperatures
            .get(&role)
            .copied()
            .unwrap_or(self.default_temperature)
    }

    pub fn usage(&self) -> TokenUsage {
        TokenUsage {
            calls: self.calls.load(Ordering::SeqCst),
            tokens_in: self.tokens_in.load(Ordering::SeqCst),
            tokens_out: self.tokens_out.load(Ordering::SeqCst),
            retries: self.retries.load(Ordering::SeqCst),
        }
    }

    pub fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, LlmError> {
        let role = prompt.role();
        let used = self.tokens_in.load(Ordering::SeqCst) + self.tokens_out.load(Ordering::SeqCst);
        if budget_guard(used, self.budget) == BudgetDecision::Halt {
            return Err(LlmError::BudgetExhausted {
                used,
                limit: self.budget.unwrap_or(0),
            });
        }
        let request = ChatRequest {
            system_prompt: prompt.system.clone(),
            user_prompt: prompt.user.clone(),
            temperature: self.temperature_for(role),
            seed: self.seed,
            max_tokens: None,
        };
        request.validate()?;
        if let Some(rl) = &self.request_limiter {
            rl.acquire(1);
        }
        if let Some(tl) = &self.token_limiter {
            tl.acquire(estimate_tokens(&prompt.system) + estimate_tokens(&prompt.user));
        }
        let digest = prompt_digest(role, &prompt.system, &prompt.user);
        let response = self.backend.complete(role, &request)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.tokens_in.fetch_add(response.tokens_in, Ordering::SeqCst);
        self.tokens_out.fetch_add(response.tokens_out, Ordering::SeqCst);
        self.retries.fetch_add(u64::from(response.retries), Ordering::SeqCst);
        Ok(Completion { digest, response })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{render_prompt, PromptContext, PromptKind};

    #[test]
    fn budget_guard_cases() {
        assert_eq!(budget_guard(100, Some(1000)), BudgetDecision::Proceed);
        assert_eq!(budget_guard(1001, Some(1000)), BudgetDecision::Halt);
        assert_eq!(budget_guard(u64::MAX, None), BudgetDecision::Proceed);
    }

    #[test]
    fn digest_depends_on_role_and_text() {
        let a = prompt_digest(AgentRole::Critic, "s", "u");
        assert_eq!(a, prompt_digest(AgentRole::Critic, "s", "u"));
        assert_ne!(a, prompt_digest(AgentRole::Reviewer, "s", "u"));
        assert_ne!(a, prompt_digest(AgentRole::Critic, "s", "u "));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn gateway_accumulates_tokens_and_halts_on_budget() {
        let backend = FnBackend::new(|_, _| Ok("one two three".to_string()));
        let gw = Gateway::new(Arc::new(backend)).with_budget(Some(10));
        let prompt = render_prompt(&PromptContext::new(PromptKind::Planner).topic("t")).unwrap();
        let first = gw.complete(&prompt).unwrap();
        assert_eq!(first.response.tokens_out, 3);
        let usage = gw.usage();
        assert_eq!(usage.calls, 1);
        assert!(usage.tokens_in > 10);
        assert!(matches!(
            gw.complete(&prompt),
            Err(LlmError::BudgetExhausted { .. })
        ));
    }

    #[test]
    fn role_temperature_overrides_default() {
        let gw = Gateway::new(Arc::new(FnBackend::new(|_, r| Ok(format!("{}", r.temperature)))))
            .with_temperature(0.3)
            .with_role_temperature(AgentRole::Scientist, 0.5);
        let sci = render_prompt(
            &PromptContext::new(PromptKind::Scientist)
                .background("b")
                .subgraph_text("s"),
        )
        .unwrap();
        let plan = render_prompt(&PromptContext::new(PromptKind::Planner).topic("t")).unwrap();
        assert_eq!(gw.complete(&sci).unwrap().response.text, "0.5");
        assert_eq!(gw.complete(&plan).unwrap().response.text, "0.3");
    }
}
