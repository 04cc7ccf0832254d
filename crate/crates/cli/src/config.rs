//! Configuration resolution: command-line flags override file values, file
//! values override defaults. Resolution is a pure function of (argv, file
//! contents, defaults); resolving twice yields an identical
//! [`ResolvedConfig`] and therefore an identical config hash.
//!
//! Credentials never live in the file: backend sections name the environment
//! variable that holds the API key, and only that name is ever printed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tandem::backend::GenerationParams;
use tandem::controller::{ConfigError, MalformedProgressPolicy, RunConfig};
use tandem::escalation::{
    BudgetSchedule, ScheduleError, DEFAULT_BUDGET_CAP, DEFAULT_SIGMOID_MIDPOINT,
    DEFAULT_SIGMOID_RATE,
};

use crate::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "tandem",
    version,
    about = "Two-tier model orchestration: trajectory batches, world simulation, and metric reports"
)]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the fully resolved configuration (credentials stay redacted to
    /// environment-variable names).
    #[arg(long, global = true)]
    pub show_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check the resolved configuration and print it.
    Validate(ValidateArgs),
    /// Run one trajectory per task line against the configured backends.
    Run(RunArgs),
    /// Run seeded synthetic-world experiments and write report files.
    Simulate(SimulateArgs),
    /// Compute metrics from trajectory logs.
    Report(ReportArgs),
    /// Grid-sweep schedule hyperparameters over a world.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct ScheduleArgs {
    /// Budget schedule kind: static, linear, or sigmoid.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Base intervention budget.
    #[arg(long)]
    pub b0: Option<u32>,
    /// Budget growth per escalation level (linear schedule).
    #[arg(long)]
    pub k: Option<u32>,
    /// Maximum intervention budget.
    #[arg(long)]
    pub bmax: Option<u32>,
    /// Growth rate (sigmoid schedule).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Midpoint level (sigmoid schedule).
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct ControllerArgs {
    /// Hard cap on steps per trajectory.
    #[arg(long)]
    pub max_iterations: Option<u32>,
    /// Large-tier planning steps before collaborative execution.
    #[arg(long)]
    pub warmup: Option<u32>,
    /// Sentinel marking a final answer in model output.
    #[arg(long)]
    pub answer_marker: Option<String>,
    /// Malformed progress handling: treat_as_false or retry_once_then_false.
    #[arg(long)]
    pub malformed_policy: Option<String>,
    /// Accept lowercase progress value tokens.
    #[arg(long)]
    pub lenient_values: bool,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub controller: ControllerArgs,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub controller: ControllerArgs,
    /// Task file: one task per line, blank lines skipped.
    #[arg(long)]
    pub tasks: PathBuf,
    /// Output directory (default: <out_dir>/run-<timestamp>-<config-hash>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Replay scripted backends at their declared latencies (wall-clock).
    #[arg(long)]
    pub paced: bool,
    /// Force the small tier to a script file.
    #[arg(long)]
    pub small_script: Option<PathBuf>,
    /// Force the large tier to a script file.
    #[arg(long)]
    pub large_script: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// World definition (JSON).
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<u32>,
    /// Experiment seed. Mandatory (here or in the file): published numbers
    /// must be reproducible.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u32>,
    /// Probability of flipping the reported progress value.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Large-tier probability for the random policy.
    #[arg(long)]
    pub random_p: Option<f64>,
    /// Comma-separated subset of: always_small, always_large, random,
    /// escalation, escalation_static.
    #[arg(long)]
    pub policies: Option<String>,
    /// Warm-up steps for the escalation policy (0 skips warm-up).
    #[arg(long)]
    pub warmup: Option<u32>,
    /// Output directory (default: <out_dir>/sim-<config-hash>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Trajectory logs: .jsonl files or directories of them; each path
    /// becomes one labeled policy group.
    #[arg(long, required = true, num_args = 1..)]
    pub logs: Vec<PathBuf>,
    /// Group label used as the speedup baseline.
    #[arg(long, default_value = "always_large")]
    pub baseline: String,
    /// External quality scores (JSON map: trajectory id -> score).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Output directory (default: report files next to stdout summary only
    /// when set).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Additionally write staircase/TPS series for this trajectory id.
    #[arg(long)]
    pub series: Option<String>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<u32>,
    /// Experiment seed (mandatory, as for simulate).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u32>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub random_p: Option<f64>,
    #[arg(long)]
    pub warmup: Option<u32>,
    /// Comma-separated growth rates to sweep (linear), e.g. 0,1,2,3.
    #[arg(long)]
    pub k_values: Option<String>,
    /// Comma-separated caps to sweep.
    #[arg(long)]
    pub bmax_values: Option<String>,
    /// Comma-separated sigmoid rates to sweep.
    #[arg(long)]
    pub alpha_values: Option<String>,
    /// Comma-separated sigmoid midpoints to sweep.
    #[arg(long)]
    pub beta_values: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

// ---------------------------------------------------------------------------
// File configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub run: RunSection,
    pub schedule: ScheduleSection,
    pub backends: BackendsSection,
    pub generation: GenerationSection,
    pub retry: RetrySection,
    pub tools: ToolsSection,
    pub sim: SimSection,
    pub io: IoSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub max_iterations: Option<u32>,
    pub warmup_budget: Option<u32>,
    pub answer_marker: Option<String>,
    pub malformed_progress_policy: Option<String>,
    pub lenient_progress_values: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: Option<String>,
    pub b0: Option<u32>,
    pub k: Option<u32>,
    pub bmax: Option<u32>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendsSection {
    pub small: BackendSection,
    pub large: BackendSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    /// "script" or "http".
    pub mode: Option<String>,
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub max_tokens: Option<u32>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrySection {
    pub max_attempts: Option<u32>,
    pub initial_backoff_ms: Option<u64>,
    pub timeout_seconds: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolsSection {
    pub lookup_fixture: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub world: Option<PathBuf>,
    pub trials: Option<u32>,
    pub seed: Option<u64>,
    pub max_steps: Option<u32>,
    pub epsilon: Option<f64>,
    pub random_p: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

pub fn load_file(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let data = std::fs::read_to_string(path).map_err(|e| {
        CliError::Validation(format!("cannot read config file {}: {e}", path.display()))
    })?;
    toml::from_str(&data).map_err(|e| {
        CliError::Validation(format!("invalid config file {}: {e}", path.display()))
    })
}

// ---------------------------------------------------------------------------
// Resolved configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedBackend {
    pub mode: String,
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: String,
    pub api_key_env: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedRetry {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub timeout_seconds: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedSim {
    pub world: Option<PathBuf>,
    pub trials: u32,
    pub seed: Option<u64>,
    pub max_steps: u32,
    pub epsilon: f64,
    pub random_p: f64,
    pub warmup: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub run: RunConfig,
    pub backends: ResolvedBackendPair,
    pub generation: GenerationParams,
    pub retry: ResolvedRetry,
    pub lookup_fixture: Option<PathBuf>,
    pub sim: ResolvedSim,
    pub out_dir: PathBuf,
    pub workers: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedBackendPair {
    pub small: ResolvedBackend,
    pub large: ResolvedBackend,
}

impl ResolvedConfig {
    /// Stable short hash over the full resolved configuration; part of every
    /// log line and run directory name.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..12].to_string()
    }
}

fn schedule_key(error: &ScheduleError) -> &'static str {
    match error {
        ScheduleError::ZeroBase => "b0",
        ScheduleError::CapBelowBase { .. } | ScheduleError::BaseNotBelowCap { .. } => "bmax",
        ScheduleError::InvalidRate(_) => "alpha",
        ScheduleError::InvalidMidpoint(_) => "beta",
    }
}

fn run_key(error: &ConfigError) -> &'static str {
    match error {
        ConfigError::ZeroMaxIterations => "max-iterations",
        ConfigError::ZeroWarmupBudget | ConfigError::WarmupExceedsMaxIterations { .. } => "warmup",
        ConfigError::EmptyAnswerMarker => "answer-marker",
        ConfigError::Schedule(e) => schedule_key(e),
    }
}

pub fn resolve_schedule(
    args: &ScheduleArgs,
    file: &ScheduleSection,
) -> Result<BudgetSchedule, CliError> {
    let kind = args
        .schedule
        .clone()
        .or_else(|| file.kind.clone())
        .unwrap_or_else(|| "linear".to_string());
    let base = args.b0.or(file.b0).unwrap_or(2);
    let growth = args.k.or(file.k).unwrap_or(2);
    let cap = args.bmax.or(file.bmax).unwrap_or(DEFAULT_BUDGET_CAP);
    let rate = args.alpha.or(file.alpha).unwrap_or(DEFAULT_SIGMOID_RATE);
    let midpoint = args.beta.or(file.beta).unwrap_or(DEFAULT_SIGMOID_MIDPOINT);

    let schedule = match kind.as_str() {
        "static" => BudgetSchedule::Static { base },
        "linear" => BudgetSchedule::LinearBounded { base, growth, cap },
        "sigmoid" => BudgetSchedule::Sigmoid {
            base,
            cap,
            rate,
            midpoint,
        },
        other => {
            return Err(CliError::Validation(format!(
                "invalid value for `schedule`: expected static, linear, or sigmoid, got `{other}`"
            )));
        }
    };
    schedule.validate().map_err(|e| {
        CliError::Validation(format!("invalid value for `{}`: {e}", schedule_key(&e)))
    })?;
    Ok(schedule)
}

pub fn resolve(
    schedule_args: &ScheduleArgs,
    controller_args: &ControllerArgs,
    file: &FileConfig,
) -> Result<ResolvedConfig, CliError> {
    let schedule = resolve_schedule(schedule_args, &file.schedule)?;

    let malformed = controller_args
        .malformed_policy
        .clone()
        .or_else(|| file.run.malformed_progress_policy.clone());
    let malformed_progress_policy = match malformed.as_deref() {
        None | Some("retry_once_then_false") => MalformedProgressPolicy::RetryOnceThenFalse,
        Some("treat_as_false") => MalformedProgressPolicy::TreatAsFalse,
        Some(other) => {
            return Err(CliError::Validation(format!(
                "invalid value for `malformed-policy`: expected treat_as_false or \
                 retry_once_then_false, got `{other}`"
            )));
        }
    };

    let run = RunConfig {
        max_iterations: controller_args
            .max_iterations
            .or(file.run.max_iterations)
            .unwrap_or(40),
        warmup_budget: controller_args
            .warmup
            .or(file.run.warmup_budget)
            .unwrap_or(2),
        schedule,
        malformed_progress_policy,
        answer_marker: controller_args
            .answer_marker
            .clone()
            .or_else(|| file.run.answer_marker.clone())
            .unwrap_or_else(|| "FINAL_ANSWER:".to_string()),
        lenient_progress_values: controller_args.lenient_values
            || file.run.lenient_progress_values.unwrap_or(false),
    };

    let backend = |section: &BackendSection, role: &str| ResolvedBackend {
        mode: section.mode.clone().unwrap_or_else(|| "http".to_string()),
        script: section.script.clone(),
        endpoint: section.endpoint.clone(),
        model: section
            .model
            .clone()
            .unwrap_or_else(|| format!("{role}-model")),
        api_key_env: section
            .api_key_env
            .clone()
            .unwrap_or_else(|| format!("TANDEM_{}_API_KEY", role.to_uppercase())),
    };

    Ok(ResolvedConfig {
        run,
        backends: ResolvedBackendPair {
            small: backend(&file.backends.small, "small"),
            large: backend(&file.backends.large, "large"),
        },
        generation: GenerationParams {
            max_tokens: file.generation.max_tokens,
            temperature: file.generation.temperature,
            seed: file.generation.seed,
        },
        retry: ResolvedRetry {
            max_attempts: file.retry.max_attempts.unwrap_or(3),
            initial_backoff_ms: file.retry.initial_backoff_ms.unwrap_or(200),
            timeout_seconds: file.retry.timeout_seconds.unwrap_or(60),
        },
        lookup_fixture: file.tools.lookup_fixture.clone(),
        sim: ResolvedSim {
            world: file.sim.world.clone(),
            trials: file.sim.trials.unwrap_or(1000),
            seed: file.sim.seed,
            max_steps: file.sim.max_steps.unwrap_or(40),
            epsilon: file.sim.epsilon.unwrap_or(0.0),
            random_p: file.sim.random_p.unwrap_or(0.5),
            warmup: file.run.warmup_budget.unwrap_or(2),
        },
        out_dir: file
            .io
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs")),
        workers: file.io.workers.unwrap_or(4),
    })
}

/// Full validation of the controller-facing configuration, with messages
/// naming the offending key.
pub fn validate_run_config(config: &RunConfig) -> Result<(), CliError> {
    config
        .validate()
        .map_err(|e| CliError::Validation(format!("invalid value for `{}`: {e}", run_key(&e))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: FileConfig = toml::from_str(
            r#"
            [schedule]
            kind = "linear"
            b0 = 3
            k = 1
            bmax = 6
            "#,
        )
        .unwrap();
        let args = ScheduleArgs {
            k: Some(2),
            ..ScheduleArgs::default()
        };
        let schedule = resolve_schedule(&args, &file.schedule).unwrap();
        assert_eq!(
            schedule,
            BudgetSchedule::LinearBounded {
                base: 3,
                growth: 2,
                cap: 6
            }
        );
    }

    #[test]
    fn defaults_follow_the_reference_parameters() {
        let schedule =
            resolve_schedule(&ScheduleArgs::default(), &ScheduleSection::default()).unwrap();
        assert_eq!(
            schedule,
            BudgetSchedule::LinearBounded {
                base: 2,
                growth: 2,
                cap: 8
            }
        );
    }

    #[test]
    fn cap_violation_names_bmax() {
        let args = ScheduleArgs {
            b0: Some(9),
            bmax: Some(8),
            ..ScheduleArgs::default()
        };
        let error = resolve_schedule(&args, &ScheduleSection::default()).unwrap_err();
        assert!(error.to_string().contains("`bmax`"), "got: {error}");
    }

    #[test]
    fn zero_max_iterations_names_the_key() {
        let controller = ControllerArgs {
            max_iterations: Some(0),
            ..ControllerArgs::default()
        };
        let resolved = resolve(
            &ScheduleArgs::default(),
            &controller,
            &FileConfig::default(),
        )
        .unwrap();
        let error = validate_run_config(&resolved.run).unwrap_err();
        assert!(error.to_string().contains("`max-iterations`"), "got: {error}");
    }

    #[test]
    fn resolution_is_pure() {
        let file: FileConfig = toml::from_str(
            r#"
            [run]
            max_iterations = 12
            [schedule]
            kind = "sigmoid"
            bmax = 9
            [io]
            workers = 2
            "#,
        )
        .unwrap();
        let args = ScheduleArgs {
            alpha: Some(0.75),
            ..ScheduleArgs::default()
        };
        let a = resolve(&args, &ControllerArgs::default(), &file).unwrap();
        let b = resolve(&args, &ControllerArgs::default(), &file).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.workers, 2);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let result: Result<FileConfig, _> = toml::from_str(
            r#"
            [run]
            max_iters = 10
            "#,
        );
        assert!(result.is_err());
    }
}
