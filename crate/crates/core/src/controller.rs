//! The two-tier trajectory state machine: a large-tier warm-up phase, a
//! collaborative phase in which the small tier runs routine steps and control
//! escalates on stagnation signals, and answer finalization.
//!
//! Escalation mechanics: every step ends with a progress self-check. A FALSE
//! signal on the small tier hands control to the large tier with an
//! intervention budget fixed at entry — computed from the escalation level at
//! the step that triggered the hand-off, not recomputed while the takeover
//! runs. The level itself keeps accumulating on every FALSE regardless of
//! tier, so a takeover that fails to restore progress leads to a larger
//! budget at the next escalation. A TRUE signal returns control to the small
//! tier immediately; exhausting the budget returns control without resetting
//! the level.

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, GenerationParams, Message, ModelBackend, ToolRegistry};
use crate::escalation::{intervention_budget, update_level, BudgetSchedule, EscalationLevel, ScheduleError};
use crate::progress::{parse_progress_block_with, render_progress_prompt, ProgressAssessment};
use crate::trajectory::{Phase, StepAction, StepRecord, Termination, Tier, TierRank, Trajectory};

/// Rationale longer than this is truncated when written to the step log.
/// Parsing itself is unbounded.
const LOGGED_RATIONALE_LIMIT: usize = 2000;

const RETRY_REMINDER: &str = "Your previous reply did not contain a valid PROGRESS block. \
Reply again and follow the required structure exactly; the value must be TRUE or FALSE and \
nothing may follow the end marker.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalformedProgressPolicy {
    /// A progress reply that fails to parse counts as stagnation.
    TreatAsFalse,
    /// Re-issue the progress prompt once with a strictness reminder, then
    /// fall back to stagnation.
    RetryOnceThenFalse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_iterations: u32,
    /// Number of large-tier planning steps before the collaborative phase.
    pub warmup_budget: u32,
    pub schedule: BudgetSchedule,
    pub malformed_progress_policy: MalformedProgressPolicy,
    /// Sentinel that marks a final answer in a model output.
    pub answer_marker: String,
    /// Accept lowercase progress value tokens (off by default; the protocol
    /// is case-sensitive).
    pub lenient_progress_values: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_iterations: 40,
            warmup_budget: 2,
            schedule: BudgetSchedule::LinearBounded {
                base: 2,
                growth: 2,
                cap: 8,
            },
            malformed_progress_policy: MalformedProgressPolicy::RetryOnceThenFalse,
            answer_marker: "FINAL_ANSWER:".to_string(),
            lenient_progress_values: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("max_iterations must be at least 1")]
    ZeroMaxIterations,
    #[error("warmup_budget must be at least 1")]
    ZeroWarmupBudget,
    #[error("warmup_budget ({warmup}) must not exceed max_iterations ({max})")]
    WarmupExceedsMaxIterations { warmup: u32, max: u32 },
    #[error("answer_marker must not be empty")]
    EmptyAnswerMarker,
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_iterations == 0 {
            return Err(ConfigError::ZeroMaxIterations);
        }
        if self.warmup_budget == 0 {
            return Err(ConfigError::ZeroWarmupBudget);
        }
        if self.warmup_budget > self.max_iterations {
            return Err(ConfigError::WarmupExceedsMaxIterations {
                warmup: self.warmup_budget,
                max: self.max_iterations,
            });
        }
        if self.answer_marker.trim().is_empty() {
            return Err(ConfigError::EmptyAnswerMarker);
        }
        self.schedule.validate()?;
        Ok(())
    }
}

/// Live controller state during the collaborative phase.
///
/// `active_budget` is meaningful while `mode` is the large tier; it is fixed
/// when an escalation is entered. `steps_total` is maintained by the caller
/// (one increment per executed step) — [`step_transition`] carries it through
/// untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscalationState {
    pub mode: TierRank,
    pub level: EscalationLevel,
    pub strong_steps_used: u32,
    pub active_budget: u32,
    pub steps_total: u32,
}

impl EscalationState {
    pub fn initial(schedule: &BudgetSchedule, level: EscalationLevel, steps_total: u32) -> Self {
        Self {
            mode: TierRank::Small,
            level,
            strong_steps_used: 0,
            active_budget: intervention_budget(schedule, level),
            steps_total,
        }
    }
}

/// One collaborative-phase transition. The caller must already have counted
/// the executed step into `strong_steps_used` when it ran on the large tier.
///
/// Branch order: progress on the small tier keeps it; stagnation on the small
/// tier escalates with a budget computed from the updated level; progress on
/// the large tier de-escalates; stagnation with the budget exhausted
/// de-escalates without resetting the level; otherwise the takeover
/// continues.
pub fn step_transition(
    state: &EscalationState,
    progress: bool,
    schedule: &BudgetSchedule,
) -> EscalationState {
    let level = update_level(state.level, progress);
    let mut next = EscalationState { level, ..*state };
    match (state.mode, progress) {
        (TierRank::Small, true) => {}
        (TierRank::Small, false) => {
            next.mode = TierRank::Large;
            next.strong_steps_used = 0;
            next.active_budget = intervention_budget(schedule, level);
        }
        (TierRank::Large, true) => {
            next.mode = TierRank::Small;
            next.strong_steps_used = 0;
        }
        (TierRank::Large, false) => {
            if state.strong_steps_used >= state.active_budget {
                next.mode = TierRank::Small;
                next.strong_steps_used = 0;
            }
        }
    }
    next
}

/// Accumulated conversation: the task framing, assistant think outputs, and
/// tool observations. Progress-check exchanges are deliberately not part of
/// it — the check reads the context, it does not extend it.
#[derive(Debug, Clone, Default)]
pub struct Context {
    messages: Vec<Message>,
}

impl Context {
    pub fn new(task: &str) -> Self {
        Self {
            messages: vec![Message::user(task)],
        }
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn push_assistant(&mut self, text: &str) {
        self.messages.push(Message::assistant(text));
    }

    pub fn push_observation(&mut self, tool: &str, observation: &str) {
        self.messages
            .push(Message::tool(format!("Observation [{tool}]: {observation}")));
    }

    fn last_assistant(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == crate::backend::MessageRole::Assistant)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("no model output to extract an answer from")]
    NoModelOutput,
    #[error("answer marker `{0}` not present in the latest model output")]
    MarkerAbsent(String),
}

/// True iff the most recent model output contains the answer sentinel. Only
/// assistant-generated spans are scanned: the marker appearing in the task
/// framing or inside a tool observation does not count.
pub fn is_final_answer(ctx: &Context, marker: &str) -> bool {
    ctx.last_assistant()
        .is_some_and(|text| text.contains(marker))
}

/// Text following the (last) sentinel in the most recent model output,
/// trimmed. Calling this without the sentinel present is a contract
/// violation and reports an internal error.
pub fn extract_answer(ctx: &Context, marker: &str) -> Result<String, ControllerError> {
    let text = ctx
        .last_assistant()
        .ok_or(ControllerError::NoModelOutput)?;
    let at = text
        .rfind(marker)
        .ok_or_else(|| ControllerError::MarkerAbsent(marker.to_string()))?;
    Ok(text[at + marker.len()..].trim().to_string())
}

fn try_extract_answer(ctx: &Context, marker: &str) -> Option<String> {
    if is_final_answer(ctx, marker) {
        extract_answer(ctx, marker).ok()
    } else {
        None
    }
}

struct StepOutcome {
    tier_label: String,
    prompt_tokens: u64,
    completion_tokens: u64,
    latency_seconds: f64,
    assessment: Option<ProgressAssessment>,
    effective_progress: bool,
    action: StepAction,
}

impl StepOutcome {
    fn into_record(
        self,
        index: u32,
        rank: TierRank,
        phase: Phase,
        level_after: EscalationLevel,
    ) -> StepRecord {
        StepRecord {
            index,
            tier: Tier {
                rank,
                label: self.tier_label,
            },
            phase,
            prompt_tokens: self.prompt_tokens,
            completion_tokens: self.completion_tokens,
            latency_seconds: self.latency_seconds,
            progress: self.assessment.map(truncate_for_log),
            level_after,
            action: self.action,
        }
    }
}

fn truncate_for_log(mut assessment: ProgressAssessment) -> ProgressAssessment {
    if assessment.rationale.chars().count() > LOGGED_RATIONALE_LIMIT {
        assessment.rationale = assessment
            .rationale
            .chars()
            .take(LOGGED_RATIONALE_LIMIT)
            .collect();
    }
    assessment
}

/// One think(+tools) call followed by a progress check on the same backend.
/// The think output and any observations extend the context; the progress
/// exchange does not.
fn execute_step(
    config: &RunConfig,
    params: &GenerationParams,
    backend: &mut dyn ModelBackend,
    tools: &ToolRegistry,
    ctx: &mut Context,
    trajectory_id: &str,
    step_index: u32,
) -> Result<StepOutcome, BackendError> {
    let think = backend.complete(ctx.messages(), params)?;
    let mut prompt_tokens = think.prompt_tokens;
    let mut completion_tokens = think.completion_tokens;
    let mut latency = think.latency_seconds;

    ctx.push_assistant(&think.text);
    let mut action = StepAction::Think;
    for call in &think.tool_calls {
        let observation = tools.execute(&call.name, &call.arguments);
        ctx.push_observation(&call.name, &observation);
        action = StepAction::ToolCall;
    }
    if think.text.contains(&config.answer_marker) {
        action = StepAction::Answer;
    }

    let mut probe: Vec<Message> = ctx.messages().to_vec();
    probe.push(Message::user(render_progress_prompt("")));
    let reply = backend.complete(&probe, params)?;
    prompt_tokens += reply.prompt_tokens;
    completion_tokens += reply.completion_tokens;
    latency += reply.latency_seconds;

    let (assessment, effective_progress) =
        match parse_progress_block_with(&reply.text, config.lenient_progress_values) {
            Ok(a) => {
                let value = a.value;
                (Some(a), value)
            }
            Err(failure) => {
                log::warn!(
                    "trajectory {trajectory_id} step {step_index}: progress parse failure: {failure}"
                );
                match config.malformed_progress_policy {
                    MalformedProgressPolicy::TreatAsFalse => (None, false),
                    MalformedProgressPolicy::RetryOnceThenFalse => {
                        let mut retry_probe: Vec<Message> = ctx.messages().to_vec();
                        retry_probe.push(Message::user(render_progress_prompt(RETRY_REMINDER)));
                        let retry = backend.complete(&retry_probe, params)?;
                        prompt_tokens += retry.prompt_tokens;
                        completion_tokens += retry.completion_tokens;
                        latency += retry.latency_seconds;
                        match parse_progress_block_with(
                            &retry.text,
                            config.lenient_progress_values,
                        ) {
                            Ok(a) => {
                                let value = a.value;
                                (Some(a), value)
                            }
                            Err(second) => {
                                log::warn!(
                                    "trajectory {trajectory_id} step {step_index}: retry also malformed: {second}"
                                );
                                (None, false)
                            }
                        }
                    }
                }
            }
        };

    Ok(StepOutcome {
        tier_label: backend.label().to_string(),
        prompt_tokens,
        completion_tokens,
        latency_seconds: latency,
        assessment,
        effective_progress,
        action,
    })
}

/// Drives one trajectory end to end over a pair of backends. Strictly
/// sequential; confine each runner to one worker.
pub struct TrajectoryRunner<'a> {
    config: &'a RunConfig,
    small: &'a mut dyn ModelBackend,
    large: &'a mut dyn ModelBackend,
    tools: &'a ToolRegistry,
    params: GenerationParams,
}

impl<'a> TrajectoryRunner<'a> {
    pub fn new(
        config: &'a RunConfig,
        small: &'a mut dyn ModelBackend,
        large: &'a mut dyn ModelBackend,
        tools: &'a ToolRegistry,
    ) -> Self {
        Self {
            config,
            small,
            large,
            tools,
            params: GenerationParams::default(),
        }
    }

    pub fn with_params(mut self, params: GenerationParams) -> Self {
        self.params = params;
        self
    }

    /// Initial planning: at most `warmup_budget` large-tier steps, each with
    /// a progress check. Returns the answer if one surfaced behind a TRUE
    /// progress signal; otherwise control hands off to the small tier.
    pub fn run_warmup(
        &mut self,
        id: &str,
        ctx: &mut Context,
        steps: &mut Vec<StepRecord>,
        level: &mut EscalationLevel,
    ) -> Result<Option<String>, BackendError> {
        for _ in 0..self.config.warmup_budget {
            if steps.len() as u32 >= self.config.max_iterations {
                break;
            }
            let index = steps.len() as u32 + 1;
            let outcome = execute_step(
                self.config,
                &self.params,
                &mut *self.large,
                self.tools,
                ctx,
                id,
                index,
            )?;
            *level = update_level(*level, outcome.effective_progress);
            let progressed = outcome.effective_progress;
            steps.push(outcome.into_record(index, TierRank::Large, Phase::Warmup, *level));
            if progressed {
                if let Some(answer) = try_extract_answer(ctx, &self.config.answer_marker) {
                    return Ok(Some(answer));
                }
            }
        }
        Ok(None)
    }

    /// Runs the full trajectory: warm-up, collaborative reasoning, and
    /// finalization. Backend failures terminate the trajectory with the
    /// partial step log preserved; they are not surfaced as errors.
    pub fn run(&mut self, id: &str, task: &str) -> Result<Trajectory, ConfigError> {
        self.config.validate()?;
        let marker = self.config.answer_marker.clone();
        let mut ctx = Context::new(task);
        let mut steps: Vec<StepRecord> = Vec::new();
        let mut level = EscalationLevel::ZERO;

        match self.run_warmup(id, &mut ctx, &mut steps, &mut level) {
            Ok(Some(answer)) => {
                return Ok(assemble(id, steps, Termination::AnswerFound, Some(answer)));
            }
            Ok(None) => {}
            Err(e) => {
                log::warn!("trajectory {id}: backend failure during warm-up: {e}");
                return Ok(assemble(id, steps, Termination::BackendFailure, None));
            }
        }

        let mut state = EscalationState::initial(&self.config.schedule, level, steps.len() as u32);
        loop {
            if let Some(answer) = try_extract_answer(&ctx, &marker) {
                return Ok(assemble(id, steps, Termination::AnswerFound, Some(answer)));
            }
            if state.steps_total >= self.config.max_iterations {
                return Ok(assemble(id, steps, Termination::IterationCapReached, None));
            }

            let exec_tier = state.mode;
            let index = state.steps_total + 1;
            let backend: &mut dyn ModelBackend = match exec_tier {
                TierRank::Small => &mut *self.small,
                TierRank::Large => &mut *self.large,
            };
            let outcome = match execute_step(
                self.config,
                &self.params,
                backend,
                self.tools,
                &mut ctx,
                id,
                index,
            ) {
                Ok(outcome) => outcome,
                Err(e) => {
                    log::warn!("trajectory {id}: backend failure at step {index}: {e}");
                    return Ok(assemble(id, steps, Termination::BackendFailure, None));
                }
            };

            if exec_tier == TierRank::Large {
                state.strong_steps_used += 1;
            }
            state = step_transition(&state, outcome.effective_progress, &self.config.schedule);
            state.steps_total += 1;
            steps.push(outcome.into_record(index, exec_tier, Phase::Collaborative, state.level));
        }
    }
}

fn assemble(
    id: &str,
    steps: Vec<StepRecord>,
    termination: Termination,
    final_answer: Option<String>,
) -> Trajectory {
    let trajectory = Trajectory {
        id: id.to_string(),
        steps,
        termination,
        final_answer,
    };
    debug_assert_eq!(trajectory.check_invariants(), Ok(()));
    trajectory
}
