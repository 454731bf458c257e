//! Chat-completion clients: an OpenAI-compatible HTTP adapter and a
//! scripted mock for offline runs.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::prompt::RenderedPrompt;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("invalid LLM configuration: {0}")]
    InvalidConfig(String),
    #[error("environment variable {0} is not set")]
    MissingCredentials(String),
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("rate limited by the LLM endpoint")]
    RateLimited { retry_after_secs: Option<u64> },
    #[error("LLM endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed LLM response: {0}")]
    Malformed(String),
    #[error("invalid mock script: {0}")]
    Script(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub backend: Backend,
    /// Full chat-completions URL.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Mock backend only.
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    250
}

impl LlmConfig {
    pub fn mock(script: impl Into<PathBuf>) -> Self {
        Self {
            backend: Backend::Mock,
            endpoint: None,
            model: "mock".into(),
            temperature: 0.0,
            max_tokens: None,
            timeout_secs: default_timeout_secs(),
            retries: 0,
            retry_backoff_ms: 0,
            api_key_env: None,
            mock_script: Some(script.into()),
        }
    }

    pub fn remote(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            backend: Backend::Remote,
            endpoint: Some(endpoint.into()),
            model: model.into(),
            temperature: 0.0,
            max_tokens: None,
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
            retry_backoff_ms: default_backoff_ms(),
            api_key_env: None,
            mock_script: None,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidConfig("temperature must be >= 0".into()));
        }
        match self.backend {
            Backend::Remote => {
                let endpoint = self
                    .endpoint
                    .as_deref()
                    .ok_or_else(|| LlmError::InvalidConfig("remote backend needs an endpoint".into()))?;
                url::Url::parse(endpoint).map_err(|e| LlmError::InvalidConfig(format!("endpoint: {e}")))?;
                if self.model.is_empty() {
                    return Err(LlmError::InvalidConfig("remote backend needs a model".into()));
                }
                if self.timeout_secs == 0 {
                    return Err(LlmError::InvalidConfig("timeout must be positive".into()));
                }
            }
            Backend::Mock => {
                if self.mock_script.is_none() {
                    return Err(LlmError::InvalidConfig("mock backend needs mock_script".into()));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn ChatModel>, LlmError> {
        self.validate()?;
        Ok(match self.backend {
            Backend::Remote => Arc::new(RemoteChat::new(self.clone())?),
            Backend::Mock => {
                let path = self.mock_script.as_ref().expect("validated");
                Arc::new(MockChat::new(MockScript::from_json_file(path)?)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: Option<String>,
    pub latency_ms: u64,
    pub usage: Option<TokenUsage>,
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<ChatResponse, LlmError>;
}

/// Builds the client for `config` and sends one prompt.
pub fn chat_complete(prompt: &RenderedPrompt, config: &LlmConfig) -> Result<ChatResponse, LlmError> {
    config.build()?.complete(prompt)
}

/// The exact JSON body the remote adapter posts.
pub fn request_body(prompt: &RenderedPrompt, config: &LlmConfig) -> Value {
    let mut body = json!({
        "model": config.model,
        "temperature": config.temperature,
        "messages": prompt.messages,
    });
    if let Some(max) = config.max_tokens {
        body["max_tokens"] = json!(max);
    }
    body
}

pub struct RemoteChat {
    config: LlmConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

enum Attempt {
    Retry(LlmError),
    Fail(LlmError),
}

impl RemoteChat {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| LlmError::MissingCredentials(var.clone()))?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent, api_key })
    }

    fn attempt(&self, body: &Value) -> Result<(String, Option<String>, Option<TokenUsage>), Attempt> {
        let endpoint = self.config.endpoint.as_deref().expect("validated");
        let mut request = self.agent.post(endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => Attempt::Retry(LlmError::Timeout { attempts: 0 }),
            other => Attempt::Retry(LlmError::Transport {
                attempts: 0,
                message: other.to_string(),
            }),
        })?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok());
        let text = response.body_mut().read_to_string().map_err(|e| {
            Attempt::Retry(LlmError::Transport {
                attempts: 0,
                message: e.to_string(),
            })
        })?;
        match status {
            200..=299 => {}
            429 => {
                return Err(Attempt::Fail(LlmError::RateLimited {
                    retry_after_secs: retry_after,
                }))
            }
            500..=599 => return Err(Attempt::Retry(LlmError::Status { status, body: text })),
            _ => return Err(Attempt::Fail(LlmError::Status { status, body: text })),
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| Attempt::Fail(LlmError::Malformed(e.to_string())))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Attempt::Fail(LlmError::Malformed("no choices".into())))?;
        let content = choice
            .message
            .content
            .ok_or_else(|| Attempt::Fail(LlmError::Malformed("choice has no content".into())))?;
        Ok((content, choice.finish_reason, parsed.usage))
    }
}

impl ChatModel for RemoteChat {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<ChatResponse, LlmError> {
        let body = request_body(prompt, &self.config);
        let start = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok((text, finish_reason, usage)) => {
                    return Ok(ChatResponse {
                        text,
                        finish_reason,
                        latency_ms: start.elapsed().as_millis() as u64,
                        usage,
                    })
                }
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempts > self.config.retries => {
                    return Err(match e {
                        LlmError::Timeout { .. } => LlmError::Timeout { attempts },
                        LlmError::Transport { message, .. } => LlmError::Transport { attempts, message },
                        other => other,
                    })
                }
                Err(Attempt::Retry(_)) => {
                    let backoff = self.config.retry_backoff_ms << (attempts - 1).min(6);
                    std::thread::sleep(Duration::from_millis(backoff));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockMatcher {
    /// Case-insensitive substring.
    Contains { contains: String },
    /// Regular expression.
    Pattern { pattern: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(flatten)]
    pub matcher: MockMatcher,
    pub response: String,
}

/// Ordered rules over the final user message; the first match wins.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default: String,
}

impl MockScript {
    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::Script(e.to_string()))
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

enum CompiledMatcher {
    Contains(String),
    Pattern(Regex),
}

pub struct MockChat {
    rules: Vec<(CompiledMatcher, String)>,
    default: String,
}

impl MockChat {
    pub fn new(script: MockScript) -> Result<Self, LlmError> {
        let rules = script
            .rules
            .into_iter()
            .map(|rule| {
                let matcher = match rule.matcher {
                    MockMatcher::Contains { contains } => CompiledMatcher::Contains(contains.to_lowercase()),
                    MockMatcher::Pattern { pattern } => {
                        CompiledMatcher::Pattern(Regex::new(&pattern).map_err(|e| LlmError::Script(e.to_string()))?)
                    }
                };
                Ok((matcher, rule.response))
            })
            .collect::<Result<_, LlmError>>()?;
        Ok(Self {
            rules,
            default: script.default,
        })
    }

    pub fn respond(&self, message: &str) -> &str {
        let lower = message.to_lowercase();
        self.rules
            .iter()
            .find(|(m, _)| match m {
                CompiledMatcher::Contains(needle) => lower.contains(needle.as_str()),
                CompiledMatcher::Pattern(re) => re.is_match(message),
            })
            .map(|(_, r)| r.as_str())
            .unwrap_or(&self.default)
    }
}

impl ChatModel for MockChat {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<ChatResponse, LlmError> {
        let start = Instant::now();
        let text = self.respond(prompt.final_user_message()).to_string();
        Ok(ChatResponse {
            text,
            finish_reason: Some("stop".into()),
            latency_ms: start.elapsed().as_millis() as u64,
            usage: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{Message, Role};

    fn prompt(q: &str) -> RenderedPrompt {
        RenderedPrompt {
            messages: vec![
                Message::new(Role::System, "rainfall context"),
                Message::new(Role::User, q),
            ],
        }
    }

    fn mock() -> MockChat {
        MockChat::new(
            MockScript::from_json(
                r#"{"rules": [
                    {"contains": "Rainfall", "response": "{\"entities\": []}"},
                    {"pattern": "^wind\\b", "response": "windy"},
                    {"contains": "rain", "response": "never reached for rainfall"}
                ], "default": "I cannot help"}"#,
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn first_rule_wins_on_final_user_message() {
        let m = mock();
        assert_eq!(m.complete(&prompt("show rainfall")).unwrap().text, "{\"entities\": []}");
        assert_eq!(m.complete(&prompt("wind speed")).unwrap().text, "windy");
        assert_eq!(m.complete(&prompt("what about snow")).unwrap().text, "I cannot help");
    }

    #[test]
    fn mock_is_deterministic() {
        let m = mock();
        let a = m.complete(&prompt("wind")).unwrap().text;
        let b = m.complete(&prompt("wind")).unwrap().text;
        assert_eq!(a, b);
    }

    #[test]
    fn bad_pattern_rejected() {
        let script = MockScript::from_json(r#"{"rules":[{"pattern":"(","response":"x"}]}"#).unwrap();
        assert!(matches!(MockChat::new(script), Err(LlmError::Script(_))));
    }

    #[test]
    fn request_body_shape() {
        let mut c = LlmConfig::remote("http://localhost:1/v1/chat/completions", "gpt-test");
        c.max_tokens = Some(64);
        let body = request_body(&prompt("hi"), &c);
        assert_eq!(
            body,
            json!({
                "model": "gpt-test",
                "temperature": 0.0,
                "max_tokens": 64,
                "messages": [
                    {"role": "system", "content": "rainfall context"},
                    {"role": "user", "content": "hi"}
                ]
            })
        );
    }

    #[test]
    fn config_validation() {
        let mut c = LlmConfig::remote("http://localhost:1/chat", "m");
        assert!(c.validate().is_ok());
        c.temperature = -0.5;
        assert!(c.validate().is_err());
        let c = LlmConfig::remote("not a url", "m");
        assert!(c.validate().is_err());
        let mut c = LlmConfig::mock("x.json");
        c.mock_script = None;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unreachable_endpoint_is_transport_error_after_retries() {
        let mut c = LlmConfig::remote("http://127.0.0.1:9/chat", "m");
        c.retries = 1;
        c.retry_backoff_ms = 1;
        c.timeout_secs = 2;
        let err = chat_complete(&prompt("q"), &c).unwrap_err();
        assert!(
            matches!(
                err,
                LlmError::Transport { attempts: 2, .. } | LlmError::Timeout { attempts: 2 }
            ),
            "{err:?}"
        );
    }
}
