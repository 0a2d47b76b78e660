//! Chat-completion client contract plus the HTTP implementation and the
//! deterministic test doubles.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::retry::{Attempt, RetryPolicy};

/// Environment variable holding the LLM API key.
pub const API_KEY_ENV: &str = "OPHLM_LLM_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("backend-unavailable after {retries} retries: {detail}")]
    BackendUnavailable { retries: u32, detail: String },
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError>;
}

impl<T: LlmClient + ?Sized> LlmClient for std::sync::Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        (**self).complete(request)
    }
}

impl<T: LlmClient + ?Sized> LlmClient for Box<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        (**self).complete(request)
    }
}

/// Replies with the last `USER:` line of the prompt, upper-cased.
#[derive(Debug, Clone)]
pub struct MockEchoLlm {
    pub user_tag: String,
}

impl Default for MockEchoLlm {
    fn default() -> Self {
        Self {
            user_tag: "USER:".into(),
        }
    }
}

impl LlmClient for MockEchoLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        let last = request
            .prompt
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix(self.user_tag.as_str()))
            .unwrap_or("");
        Ok(Completion {
            text: last.trim().to_uppercase(),
        })
    }
}

/// Deterministic stand-in for a dataset generator. Answers forge prompts in
/// the `Q:`/`A:` format using only the prompt's own content: the question
/// comes from the first patient line or the `Task:` line, the answer from the
/// fact bullets or conversation lines.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockGenLlm;

impl LlmClient for MockGenLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        let lines: Vec<&str> = request.prompt.lines().map(str::trim).collect();
        let field = |tag: &str| lines.iter().find_map(|l| l.strip_prefix(tag)).map(str::trim);
        let topic = field("Disease:").or_else(|| field("Topic:")).unwrap_or("eye health");
        let question = match field("PATIENT:") {
            Some(q) => q.to_string(),
            None => format!("{} ({topic})", field("Task:").unwrap_or("Tell me about this condition.")),
        };
        let body: Vec<&str> = lines
            .iter()
            .filter_map(|l| l.strip_prefix("- ").or_else(|| l.strip_prefix("DOCTOR:")))
            .map(str::trim)
            .collect();
        Ok(Completion {
            text: format!("Q: {question}\nA: Regarding {topic}: {}", body.join(" ")),
        })
    }
}

/// Always fails as an unreachable backend would.
#[derive(Debug, Clone, Default)]
pub struct FailingLlm;

impl LlmClient for FailingLlm {
    fn complete(&self, _request: &CompletionRequest) -> Result<Completion, LlmError> {
        Err(LlmError::BackendUnavailable {
            retries: 0,
            detail: "backend configured to fail".into(),
        })
    }
}

/// Adapts a closure into an [`LlmClient`].
pub struct FnLlm<F>(pub F);

impl<F> LlmClient for FnLlm<F>
where
    F: Fn(&CompletionRequest) -> Result<Completion, LlmError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        (self.0)(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpLlmConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub retry: RetryPolicy,
}

impl Default for HttpLlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8600/v1/complete".into(),
            timeout_ms: 30_000,
            retry: RetryPolicy::default(),
        }
    }
}

/// `POST {endpoint}` with `{prompt, max_tokens, temperature}`, expecting
/// `{text}`. Sends `Authorization: Bearer $OPHLM_LLM_KEY` when the key is set.
pub struct HttpLlmClient {
    config: HttpLlmConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpLlmClient {
    pub fn new(config: HttpLlmConfig) -> Self {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: HttpLlmConfig, api_key: Option<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Self { config, api_key, agent }
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        self.config
            .retry
            .run(|_| {
                let mut req = self.agent.post(&self.config.endpoint);
                if let Some(key) = &self.api_key {
                    req = req.set("Authorization", &format!("Bearer {key}"));
                }
                match req.send_json(request) {
                    Ok(resp) => resp
                        .into_json::<Completion>()
                        .map_err(|e| Attempt::Fatal(format!("malformed response: {e}"))),
                    Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                        Err(Attempt::Transient(format!("status {code}")))
                    }
                    Err(ureq::Error::Status(code, _)) => Err(Attempt::Fatal(format!("status {code}"))),
                    Err(ureq::Error::Transport(t)) => Err(Attempt::Transient(t.to_string())),
                }
            })
            .map_err(|ex| LlmError::BackendUnavailable {
                retries: ex.retries,
                detail: ex.last,
            })
    }
}
