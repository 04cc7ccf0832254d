//! Deterministic canned backend: replays a fixed list of outputs in order.
//! Consuming past the end is an error, never a silent wraparound, so a test
//! that issues one call too many fails loudly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendError, GenerationParams, Message, ModelBackend, ModelOutput, ToolCall};
use crate::progress::{emit_progress_block, ProgressAssessment};

pub const SCRIPT_SCHEMA_VERSION: u32 = 1;

/// On-disk script format: a versioned JSON document listing canned outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptFile {
    pub version: u32,
    pub outputs: Vec<ScriptEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub text: String,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub latency_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
}

impl From<ScriptEntry> for ModelOutput {
    fn from(entry: ScriptEntry) -> Self {
        ModelOutput {
            text: entry.text,
            prompt_tokens: entry.prompt_tokens,
            completion_tokens: entry.completion_tokens,
            latency_seconds: entry.latency_seconds,
            tool_calls: entry.tool_calls,
        }
    }
}

pub struct ScriptedBackend {
    label: String,
    outputs: Vec<ModelOutput>,
    cursor: usize,
}

impl ScriptedBackend {
    pub fn new(label: impl Into<String>, outputs: Vec<ModelOutput>) -> Self {
        Self {
            label: label.into(),
            outputs,
            cursor: 0,
        }
    }

    pub fn from_script_file(
        label: impl Into<String>,
        path: impl AsRef<Path>,
    ) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let data = std::fs::read_to_string(path).map_err(|e| BackendError::MalformedScript {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let file: ScriptFile =
            serde_json::from_str(&data).map_err(|e| BackendError::MalformedScript {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        if file.version != SCRIPT_SCHEMA_VERSION {
            return Err(BackendError::MalformedScript {
                path: path.display().to_string(),
                message: format!(
                    "unsupported script version {} (expected {})",
                    file.version, SCRIPT_SCHEMA_VERSION
                ),
            });
        }
        Ok(Self::new(
            label,
            file.outputs.into_iter().map(ModelOutput::from).collect(),
        ))
    }

    /// Outputs not yet consumed.
    pub fn remaining(&self) -> usize {
        self.outputs.len() - self.cursor
    }
}

impl ModelBackend for ScriptedBackend {
    fn label(&self) -> &str {
        &self.label
    }

    fn complete(
        &mut self,
        _messages: &[Message],
        _params: &GenerationParams,
    ) -> Result<ModelOutput, BackendError> {
        let output = self
            .outputs
            .get(self.cursor)
            .cloned()
            .ok_or(BackendError::ScriptExhausted(self.outputs.len()))?;
        self.cursor += 1;
        Ok(output)
    }
}

/// Builds think/progress entry pairs from a progress sequence, so a test can
/// describe a whole trajectory as a list of booleans. Each controller step
/// consumes one think entry and one progress entry.
#[derive(Default)]
pub struct ScriptBuilder {
    outputs: Vec<ModelOutput>,
    think_tokens: (u64, u64),
    progress_tokens: (u64, u64),
    latency: f64,
}

impl ScriptBuilder {
    pub fn new() -> Self {
        Self {
            outputs: Vec::new(),
            think_tokens: (8, 16),
            progress_tokens: (4, 8),
            latency: 1.0,
        }
    }

    /// Declared latency attached to every subsequent entry.
    pub fn latency(mut self, seconds: f64) -> Self {
        self.latency = seconds;
        self
    }

    pub fn raw(mut self, output: ModelOutput) -> Self {
        self.outputs.push(output);
        self
    }

    pub fn think(mut self, text: &str) -> Self {
        let (prompt, completion) = self.think_tokens;
        self.outputs.push(ModelOutput {
            text: text.to_string(),
            prompt_tokens: prompt,
            completion_tokens: completion,
            latency_seconds: self.latency,
            tool_calls: Vec::new(),
        });
        self
    }

    pub fn think_with_tool(mut self, text: &str, tool: &str, arguments: &str) -> Self {
        let (prompt, completion) = self.think_tokens;
        self.outputs.push(ModelOutput {
            text: text.to_string(),
            prompt_tokens: prompt,
            completion_tokens: completion,
            latency_seconds: self.latency,
            tool_calls: vec![ToolCall {
                name: tool.to_string(),
                arguments: arguments.to_string(),
            }],
        });
        self
    }

    pub fn progress(mut self, value: bool) -> Self {
        let rationale = if value {
            "the latest step advanced the objective"
        } else {
            "no meaningful progress since the last step"
        };
        let assessment = ProgressAssessment::new(rationale, value).unwrap();
        let (prompt, completion) = self.progress_tokens;
        self.outputs.push(ModelOutput {
            text: emit_progress_block(&assessment),
            prompt_tokens: prompt,
            completion_tokens: completion,
            latency_seconds: self.latency,
            tool_calls: Vec::new(),
        });
        self
    }

    /// A progress reply with verbatim text, e.g. a malformed block for
    /// exercising the malformed-output policies.
    pub fn progress_text(mut self, text: &str) -> Self {
        let (prompt, completion) = self.progress_tokens;
        self.outputs.push(ModelOutput {
            text: text.to_string(),
            prompt_tokens: prompt,
            completion_tokens: completion,
            latency_seconds: self.latency,
            tool_calls: Vec::new(),
        });
        self
    }

    /// One full step: a plain think entry followed by a progress entry.
    pub fn step(self, progress: bool) -> Self {
        self.think("working on the task").progress(progress)
    }

    /// One full step whose think output carries the final answer sentinel.
    pub fn answer_step(self, marker: &str, answer: &str, progress: bool) -> Self {
        let text = format!("I now have everything I need.\n{marker} {answer}");
        self.think(&text).progress(progress)
    }

    pub fn steps(mut self, progress_values: &[bool]) -> Self {
        for &value in progress_values {
            self = self.step(value);
        }
        self
    }

    pub fn build(self, label: impl Into<String>) -> ScriptedBackend {
        ScriptedBackend::new(label, self.outputs)
    }

    pub fn into_outputs(self) -> Vec<ModelOutput> {
        self.outputs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replays_in_order_and_errors_past_the_end() {
        let mut backend = ScriptedBackend::new(
            "test",
            vec![
                ModelOutput {
                    text: "hello".into(),
                    prompt_tokens: 1,
                    completion_tokens: 2,
                    latency_seconds: 0.5,
                    tool_calls: vec![],
                },
                ModelOutput {
                    text: "world".into(),
                    prompt_tokens: 3,
                    completion_tokens: 4,
                    latency_seconds: 0.25,
                    tool_calls: vec![],
                },
            ],
        );
        let params = GenerationParams::default();
        let first = backend.complete(&[Message::user("hi")], &params).unwrap();
        assert_eq!(first.text, "hello");
        assert_eq!(first.latency_seconds, 0.5);
        assert_eq!(backend.remaining(), 1);
        assert_eq!(
            backend.complete(&[], &params).unwrap().text,
            "world"
        );
        assert!(matches!(
            backend.complete(&[], &params),
            Err(BackendError::ScriptExhausted(2))
        ));
    }

    #[test]
    fn identical_scripts_replay_identically() {
        let build = || ScriptBuilder::new().steps(&[true, false, true]).build("s");
        let mut a = build();
        let mut b = build();
        let params = GenerationParams::default();
        for _ in 0..6 {
            let out_a = a.complete(&[], &params).unwrap();
            let out_b = b.complete(&[], &params).unwrap();
            assert_eq!(out_a, out_b);
        }
    }

    #[test]
    fn script_file_round_trips_and_checks_version() {
        let file = ScriptFile {
            version: SCRIPT_SCHEMA_VERSION,
            outputs: vec![ScriptEntry {
                text: "canned".into(),
                prompt_tokens: 5,
                completion_tokens: 7,
                latency_seconds: 1.5,
                tool_calls: vec![ToolCall {
                    name: "echo".into(),
                    arguments: "abc".into(),
                }],
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(&path, serde_json::to_string_pretty(&file).unwrap()).unwrap();

        let mut backend = ScriptedBackend::from_script_file("replay", &path).unwrap();
        let out = backend
            .complete(&[], &GenerationParams::default())
            .unwrap();
        assert_eq!(out.text, "canned");
        assert_eq!(out.tool_calls.len(), 1);

        std::fs::write(&path, r#"{"version": 99, "outputs": []}"#).unwrap();
        assert!(matches!(
            ScriptedBackend::from_script_file("replay", &path),
            Err(BackendError::MalformedScript { .. })
        ));
    }
}
