//! Live backend speaking the widely deployed chat-completions wire shape:
//! a `messages` array in, choice text plus usage counts out.
//!
//! Request fields: `model`, `messages` (`role`/`content` pairs), and the
//! optional `temperature`, `max_tokens`, `seed`. Response fields read back:
//! `choices[0].message.content`, `choices[0].message.tool_calls[].function`
//! (`name`/`arguments`), and `usage.prompt_tokens` /
//! `usage.completion_tokens`. Tool observations are sent as `user` messages
//! so that servers without tool-role support still accept the history.
//!
//! Transient transport failures and retryable statuses (429 and 5xx) are
//! retried with exponential backoff before a failure is surfaced. Every call
//! runs under a mandatory timeout and records its own wall-clock latency.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    BackendError, GenerationParams, Message, MessageRole, ModelBackend, ModelOutput, ToolCall,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts, including the first one. Must be at least 1.
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

pub struct HttpChatBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn attempt(
        &self,
        request: &ChatRequest<'_>,
    ) -> Result<ModelOutput, AttemptError> {
        let started = Instant::now();
        let mut builder = self.client.post(&self.config.endpoint).json(request);
        if let Some(key) = &self.config.api_key {
            builder = builder.header("Authorization", format!("Bearer {key}"));
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Retryable(BackendError::Timeout(
                    self.config.timeout.as_secs_f64(),
                ))
            } else if e.is_connect() || e.is_request() {
                AttemptError::Retryable(BackendError::Transport(e.to_string()))
            } else {
                AttemptError::Fatal(BackendError::Transport(e.to_string()))
            }
        })?;

        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            let error = BackendError::HttpStatus {
                status: status.as_u16(),
                body,
            };
            return if status.as_u16() == 429 || status.is_server_error() {
                Err(AttemptError::Retryable(error))
            } else {
                Err(AttemptError::Fatal(error))
            };
        }

        let parsed: ChatResponse = response
            .json()
            .map_err(|e| AttemptError::Fatal(BackendError::Transport(e.to_string())))?;
        let latency = started.elapsed().as_secs_f64();

        let choice = parsed.choices.into_iter().next().ok_or_else(|| {
            AttemptError::Fatal(BackendError::Transport(
                "response contained no choices".to_string(),
            ))
        })?;
        let usage = parsed.usage.unwrap_or_default();
        Ok(ModelOutput {
            text: choice.message.content.unwrap_or_default(),
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            latency_seconds: latency,
            tool_calls: choice
                .message
                .tool_calls
                .into_iter()
                .map(|tc| ToolCall {
                    name: tc.function.name,
                    arguments: tc.function.arguments,
                })
                .collect(),
        })
    }
}

impl ModelBackend for HttpChatBackend {
    fn label(&self) -> &str {
        &self.config.model
    }

    fn complete(
        &mut self,
        messages: &[Message],
        params: &GenerationParams,
    ) -> Result<ModelOutput, BackendError> {
        let wire_messages: Vec<WireMessage<'_>> =
            messages.iter().map(WireMessage::from).collect();
        let request = ChatRequest {
            model: &self.config.model,
            messages: wire_messages,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            seed: params.seed,
        };

        let attempts = self.config.retry.max_attempts.max(1);
        let mut backoff = Duration::from_millis(self.config.retry.initial_backoff_ms);
        let mut last_error = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            match self.attempt(&request) {
                Ok(output) => return Ok(output),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retryable(e)) => {
                    log::warn!(
                        "backend {} attempt {}/{} failed: {e}",
                        self.config.model,
                        attempt + 1,
                        attempts
                    );
                    last_error = Some(e);
                }
            }
        }
        Err(last_error.unwrap_or_else(|| BackendError::Transport("no attempts made".into())))
    }
}

enum AttemptError {
    Retryable(BackendError),
    Fatal(BackendError),
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

impl<'a> From<&'a Message> for WireMessage<'a> {
    fn from(message: &'a Message) -> Self {
        let role = match message.role {
            MessageRole::System => "system",
            MessageRole::User => "user",
            MessageRole::Assistant => "assistant",
            // Tool observations ride as user turns; see module docs.
            MessageRole::Tool => "user",
        };
        WireMessage {
            role,
            content: &message.content,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
    #[serde(default)]
    tool_calls: Vec<WireToolCall>,
}

#[derive(Deserialize)]
struct WireToolCall {
    function: WireFunction,
}

#[derive(Deserialize)]
struct WireFunction {
    name: String,
    arguments: String,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}
