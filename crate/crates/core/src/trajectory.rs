//! Trajectory records — the unit every metric is computed from — and their
//! line-delimited log format.
//!
//! A trajectory log holds one JSON object per line. Step lines carry
//! `record: "step"` and the full step fields; a final line with
//! `record: "end"` carries the termination and any final answer. Every line
//! repeats the trajectory id, the config hash, and the schema version, so a
//! log remains self-describing when files are concatenated.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::escalation::EscalationLevel;
use crate::progress::ProgressAssessment;

pub const LOG_SCHEMA_VERSION: &str = "1";

/// Model capacity tier. Exactly two exist per run, and the order is part of
/// the contract: `Small < Large`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum TierRank {
    Small,
    Large,
}

impl std::fmt::Display for TierRank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TierRank::Small => write!(f, "small"),
            TierRank::Large => write!(f, "large"),
        }
    }
}

/// A tier together with the label of the model serving it (for logs and
/// token attribution).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tier {
    pub rank: TierRank,
    pub label: String,
}

impl Tier {
    pub fn small(label: impl Into<String>) -> Self {
        Self {
            rank: TierRank::Small,
            label: label.into(),
        }
    }

    pub fn large(label: impl Into<String>) -> Self {
        Self {
            rank: TierRank::Large,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Collaborative,
    Finalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    Think,
    ToolCall,
    Answer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    AnswerFound,
    IterationCapReached,
    BackendFailure,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::AnswerFound => write!(f, "answer_found"),
            Termination::IterationCapReached => write!(f, "iteration_cap_reached"),
            Termination::BackendFailure => write!(f, "backend_failure"),
        }
    }
}

/// One executed step: which tier ran it, what it cost, and what the
/// self-evaluation said afterwards. `progress` is absent when the model's
/// progress reply failed to parse (the failure itself goes to the log stream,
/// and the step counts as stagnation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based, consecutive within a trajectory.
    pub index: u32,
    pub tier: Tier,
    pub phase: Phase,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_seconds: f64,
    pub progress: Option<ProgressAssessment>,
    pub level_after: EscalationLevel,
    pub action: StepAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    pub final_answer: Option<String>,
}

impl Trajectory {
    pub fn total_latency(&self) -> f64 {
        self.steps.iter().map(|s| s.latency_seconds).sum()
    }

    pub fn total_completion_tokens(&self) -> u64 {
        self.steps.iter().map(|s| s.completion_tokens).sum()
    }

    /// Structural invariants: consecutive 1-based indices, non-negative
    /// latencies, and the answer/termination pairing.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, step) in self.steps.iter().enumerate() {
            if step.index as usize != i + 1 {
                return Err(format!(
                    "step index {} at position {} is not consecutive",
                    step.index, i
                ));
            }
            if step.latency_seconds < 0.0 || !step.latency_seconds.is_finite() {
                return Err(format!("step {} has invalid latency", step.index));
            }
        }
        match self.termination {
            Termination::AnswerFound if self.final_answer.is_none() => {
                Err("answer_found termination without a final answer".to_string())
            }
            Termination::IterationCapReached | Termination::BackendFailure
                if self.final_answer.is_some() =>
            {
                Err("final answer present without answer_found termination".to_string())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trajectory {id} has no end record")]
    Incomplete { id: String },
}

#[derive(Serialize, Deserialize)]
struct StepLine<'a> {
    schema: &'a str,
    record: &'a str,
    trajectory_id: &'a str,
    config_hash: &'a str,
    #[serde(flatten)]
    step: StepRecord,
}

#[derive(Serialize, Deserialize)]
struct EndLine<'a> {
    schema: &'a str,
    record: &'a str,
    trajectory_id: &'a str,
    config_hash: &'a str,
    termination: Termination,
    final_answer: Option<String>,
}

/// Writes one trajectory as JSON lines: every step, then the end record.
pub fn write_jsonl<W: Write>(
    writer: &mut W,
    trajectory: &Trajectory,
    config_hash: &str,
) -> std::io::Result<()> {
    for step in &trajectory.steps {
        let line = StepLine {
            schema: LOG_SCHEMA_VERSION,
            record: "step",
            trajectory_id: &trajectory.id,
            config_hash,
            step: step.clone(),
        };
        serde_json::to_writer(&mut *writer, &line)?;
        writer.write_all(b"\n")?;
    }
    let end = EndLine {
        schema: LOG_SCHEMA_VERSION,
        record: "end",
        trajectory_id: &trajectory.id,
        config_hash,
        termination: trajectory.termination,
        final_answer: trajectory.final_answer.clone(),
    };
    serde_json::to_writer(&mut *writer, &end)?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Reads every trajectory from a log stream (possibly several concatenated
/// logs). Steps must arrive in order and each trajectory must close with an
/// end record.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Trajectory>, LogError> {
    let mut finished = Vec::new();
    let mut open: Vec<(String, Trajectory)> = Vec::new();

    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.map_err(|source| LogError::Io {
            path: "<stream>".to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| LogError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        let record = value
            .get("record")
            .and_then(|r| r.as_str())
            .ok_or_else(|| LogError::Malformed {
                line: line_no,
                message: "missing record field".to_string(),
            })?
            .to_string();
        let id = value
            .get("trajectory_id")
            .and_then(|r| r.as_str())
            .ok_or_else(|| LogError::Malformed {
                line: line_no,
                message: "missing trajectory_id field".to_string(),
            })?
            .to_string();

        match record.as_str() {
            "step" => {
                let step: StepRecord =
                    serde_json::from_value(value).map_err(|e| LogError::Malformed {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                let entry = match open.iter_mut().find(|(open_id, _)| *open_id == id) {
                    Some((_, t)) => t,
                    None => {
                        open.push((
                            id.clone(),
                            Trajectory {
                                id,
                                steps: Vec::new(),
                                termination: Termination::BackendFailure,
                                final_answer: None,
                            },
                        ));
                        &mut open.last_mut().unwrap().1
                    }
                };
                if step.index as usize != entry.steps.len() + 1 {
                    return Err(LogError::Malformed {
                        line: line_no,
                        message: format!(
                            "step index {} out of order (expected {})",
                            step.index,
                            entry.steps.len() + 1
                        ),
                    });
                }
                entry.steps.push(step);
            }
            "end" => {
                let termination: Termination = serde_json::from_value(
                    value
                        .get("termination")
                        .cloned()
                        .unwrap_or(serde_json::Value::Null),
                )
                .map_err(|e| LogError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
                let final_answer = value
                    .get("final_answer")
                    .and_then(|v| v.as_str())
                    .map(str::to_string);
                let position = open.iter().position(|(open_id, _)| *open_id == id);
                let mut trajectory = match position {
                    Some(p) => open.remove(p).1,
                    // An end record with zero steps is legal (failed before
                    // the first step completed).
                    None => Trajectory {
                        id,
                        steps: Vec::new(),
                        termination,
                        final_answer: None,
                    },
                };
                trajectory.termination = termination;
                trajectory.final_answer = final_answer;
                finished.push(trajectory);
            }
            other => {
                return Err(LogError::Malformed {
                    line: line_no,
                    message: format!("unknown record type `{other}`"),
                });
            }
        }
    }

    if let Some((id, _)) = open.into_iter().next() {
        return Err(LogError::Incomplete { id });
    }
    Ok(finished)
}

pub fn read_jsonl_file(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, LogError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_jsonl(std::io::BufReader::new(file))
}
