//! Model backends: a uniform completion interface over the two tiers, with a
//! deterministic scripted implementation for tests and offline replay, a
//! live chat-completions HTTP client, and the minimal tool dispatch used by
//! the Think–Act–Observe loop.

mod http;
mod scripted;
mod tools;

pub use http::{HttpBackendConfig, HttpChatBackend, RetryPolicy};
pub use scripted::{ScriptBuilder, ScriptEntry, ScriptFile, ScriptedBackend, SCRIPT_SCHEMA_VERSION};
pub use tools::{EchoTool, LookupTool, Tool, ToolRegistry};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageRole {
    System,
    User,
    Assistant,
    Tool,
}

/// One entry of the conversation handed to a backend. The first message of a
/// trajectory is always the task framing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::Assistant,
            content: content.into(),
        }
    }

    pub fn tool(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::Tool,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_tokens: Option<u32>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
}

/// A tool invocation requested by the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub arguments: String,
}

/// One completion: text, usage counts, measured (or script-declared) latency,
/// and any tool calls the model requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_seconds: f64,
    #[serde(default)]
    pub tool_calls: Vec<ToolCall>,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("request timed out after {0:.1}s")]
    Timeout(f64),
    #[error("script exhausted after {0} outputs")]
    ScriptExhausted(usize),
    #[error("malformed script file {path}: {message}")]
    MalformedScript { path: String, message: String },
}

/// A model tier seen through its completion endpoint. Implementations must
/// tolerate whatever message history the controller accumulated; the scripted
/// implementation additionally guarantees identical outputs for identical
/// call sequences.
pub trait ModelBackend {
    /// Stable label used for tier attribution in trajectory logs.
    fn label(&self) -> &str;

    fn complete(
        &mut self,
        messages: &[Message],
        params: &GenerationParams,
    ) -> Result<ModelOutput, BackendError>;
}
