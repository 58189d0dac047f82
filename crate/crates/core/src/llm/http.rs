use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};
use crate::model::AgentRole;

pub const ENV_LLM_URL: &str = "HYPOFORGE_LLM_URL";
pub const ENV_LLM_KEY: &str = "HYPOFORGE_LLM_KEY";
pub const ENV_LLM_MODEL: &str = "HYPOFORGE_LLM_MODEL";

const DEFAULT_MODEL: &str = "gpt-4.1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Minimal JSON-over-HTTP POST used by the chat backend.
pub trait HttpTransport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<HttpReply, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl HttpTransport for UreqTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<HttpReply, TransportError> {
        let mut req = self.agent.post(url).set("Content-Type", "application/json");
        if let Some(key) = bearer {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(resp) => {
                let status = resp.status();
                let body = resp
                    .into_string()
                    .map_err(|e| TransportError(e.to_string()))?;
                Ok(HttpReply { status, body })
            }
            Err(ureq::Error::Status(status, resp)) => Ok(HttpReply {
                status,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(e) => Err(TransportError(e.to_string())),
        }
    }
}

#[derive(Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    sleep: Arc<dyn Fn(Duration) + Send + Sync>,
}

impl std::fmt::Debug for RetryPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RetryPolicy")
            .field("max_attempts", &self.max_attempts)
            .field("base_delay", &self.base_delay)
            .finish()
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self::new(5, Duration::from_millis(500))
    }
}

impl RetryPolicy {
    pub fn new(max_attempts: u32, base_delay: Duration) -> Self {
        Self {
            max_attempts: max_attempts.max(1),
            base_delay,
            sleep: Arc::new(std::thread::sleep),
        }
    }

    /// Replaces the sleep function, e.g. to observe backoff delays in tests.
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Arc::new(sleep);
        self
    }

    /// Delay before retry number `retry` (1-based): base · 2^(retry-1).
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry.saturating_sub(1))
    }

    pub(crate) fn pause(&self, retry: u32) {
        (self.sleep)(self.delay(retry));
    }
}

fn is_transient(status: u16) -> bool {
    status == 429 || (500..=599).contains(&status)
}

/// Chat-completions client for OpenAI-compatible endpoints.
pub struct HttpBackend {
    url: String,
    api_key: Option<String>,
    model: String,
    retry: RetryPolicy,
    transport: Box<dyn HttpTransport>,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, api_key: Option<String>, transport: Box<dyn HttpTransport>) -> Self {
        Self {
            url: url.into(),
            api_key,
            model: DEFAULT_MODEL.into(),
            retry: RetryPolicy::default(),
            transport,
        }
    }

    /// Reads endpoint, key and optional model from the environment.
    pub fn from_env() -> Result<Self, LlmError> {
        let url = std::env::var(ENV_LLM_URL)
            .map_err(|_| LlmError::Config(format!("set {ENV_LLM_URL} to a chat-completions endpoint")))?;
        let key = std::env::var(ENV_LLM_KEY)
            .map_err(|_| LlmError::Config(format!("set {ENV_LLM_KEY} to the provider API key")))?;
        let mut backend = Self::new(url, Some(key), Box::new(UreqTransport::default()));
        if let Ok(model) = std::env::var(ENV_LLM_MODEL) {
            backend.model = model;
        }
        Ok(backend)
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        if let Some(max) = request.max_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }
}

fn parse_completion(body: &str) -> Result<(String, u64, u64), LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Protocol(e.to_string()))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::Protocol("missing choices[0].message.content".into()))?;
    let tokens_in = v.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0);
    let tokens_out = v
        .pointer("/usage/completion_tokens")
        .and_then(Value::as_u64)
        .unwrap_or(0);
    Ok((text.to_string(), tokens_in, tokens_out))
}

impl ChatBackend for HttpBackend {
    fn complete(&self, _role: AgentRole, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let body = self.body(request);
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            if attempt > 1 {
                self.retry.pause(attempt - 1);
            }
            match self.transport.post_json(&self.url, self.api_key.as_deref(), &body) {
                Ok(reply) if reply.status == 200 => {
                    let (text, tokens_in, tokens_out) = parse_completion(&reply.body)?;
                    return Ok(ChatResponse {
                        text,
                        tokens_in,
                        tokens_out,
                        retries: attempt - 1,
                    });
                }
                Ok(reply) if is_transient(reply.status) => {
                    log::warn!("llm endpoint returned {} (attempt {attempt})", reply.status);
                    last = format!("HTTP {}", reply.status);
                }
                Ok(reply) => {
                    return Err(LlmError::Http {
                        status: reply.status,
                        body: reply.body,
                    })
                }
                Err(e) => {
                    log::warn!("llm transport error (attempt {attempt}): {e}");
                    last = e.0;
                }
            }
        }
        Err(LlmError::Transport {
            attempts: self.retry.max_attempts,
            last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Sequence {
        replies: Mutex<Vec<Result<HttpReply, TransportError>>>,
        seen: Mutex<Vec<Value>>,
    }

    impl Sequence {
        fn new(mut replies: Vec<Result<HttpReply, TransportError>>) -> Self {
            replies.reverse();
            Self {
                replies: Mutex::new(replies),
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl HttpTransport for Arc<Sequence> {
        fn post_json(&self, _url: &str, _bearer: Option<&str>, body: &Value) -> Result<HttpReply, TransportError> {
            self.seen.lock().unwrap().push(body.clone());
            self.replies
                .lock()
                .unwrap()
                .pop()
                .unwrap_or(Err(TransportError("exhausted".into())))
        }
    }

    fn ok_body(text: &str) -> HttpReply {
        HttpReply {
            status: 200,
            body: json!({
                "choices": [{"message": {"role": "assistant", "content": text}}],
                "usage": {"prompt_tokens": 12, "completion_tokens": 3}
            })
            .to_string(),
        }
    }

    fn too_many() -> Result<HttpReply, TransportError> {
        Ok(HttpReply {
            status: 429,
            body: "slow down".into(),
        })
    }

    #[test]
    fn retries_429_then_succeeds() {
        let seq = Arc::new(Sequence::new(vec![too_many(), too_many(), too_many(), Ok(ok_body("hi"))]));
        let delays = Arc::new(Mutex::new(Vec::new()));
        let d2 = delays.clone();
        let backend = HttpBackend::new("http://x", Some("k".into()), Box::new(seq.clone())).with_retry(
            RetryPolicy::new(5, Duration::from_millis(10)).with_sleeper(move |d| d2.lock().unwrap().push(d)),
        );
        let resp = backend
            .complete(AgentRole::Critic, &ChatRequest::new("s", "u"))
            .unwrap();
        assert_eq!(resp.text, "hi");
        assert_eq!(resp.retries, 3);
        assert_eq!((resp.tokens_in, resp.tokens_out), (12, 3));
        assert_eq!(
            *delays.lock().unwrap(),
            vec![
                Duration::from_millis(10),
                Duration::from_millis(20),
                Duration::from_millis(40)
            ]
        );
        let body = &seq.seen.lock().unwrap()[0];
        assert_eq!(body["seed"], 42);
        assert_eq!(body["messages"][0]["role"], "system");
    }

    #[test]
    fn attempts_exhausted_is_transport_error() {
        let seq = Arc::new(Sequence::new(vec![too_many(), Err(TransportError("reset".into()))]));
        let backend = HttpBackend::new("http://x", None, Box::new(seq))
            .with_retry(RetryPolicy::new(2, Duration::ZERO));
        let err = backend
            .complete(AgentRole::Critic, &ChatRequest::new("s", "u"))
            .unwrap_err();
        assert!(matches!(err, LlmError::Transport { attempts: 2, .. }));
    }

    #[test]
    fn malformed_reply_is_protocol_error() {
        let seq = Arc::new(Sequence::new(vec![Ok(HttpReply {
            status: 200,
            body: "{\"choices\": []}".into(),
        })]));
        let backend = HttpBackend::new("http://x", None, Box::new(seq));
        assert!(matches!(
            backend.complete(AgentRole::Critic, &ChatRequest::new("s", "u")),
            Err(LlmError::Protocol(_))
        ));
    }

    #[test]
    fn client_error_not_retried() {
        let seq = Arc::new(Sequence::new(vec![Ok(HttpReply {
            status: 401,
            body: "bad key".into(),
        })]));
        let backend = HttpBackend::new("http://x", None, Box::new(seq.clone()));
        assert!(matches!(
            backend.complete(AgentRole::Critic, &ChatRequest::new("s", "u")),
            Err(LlmError::Http { status: 401, .. })
        ));
        assert_eq!(seq.seen.lock().unwrap().len(), 1);
    }
}
