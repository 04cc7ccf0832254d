use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;

use tandem::backend::{
    BackendError, GenerationParams, HttpBackendConfig, HttpChatBackend, Message, ModelBackend,
    ModelOutput, RetryPolicy, ScriptedBackend, ToolRegistry,
};
use tandem::controller::TrajectoryRunner;
use tandem::trajectory::{write_jsonl, Termination, Trajectory};

use crate::config::{resolve, validate_run_config, FileConfig, ResolvedBackend, RunArgs};
use crate::CliError;

pub fn run(args: &RunArgs, file: &FileConfig, show_config: bool) -> Result<u8, CliError> {
    let mut resolved = resolve(&args.schedule, &args.controller, file)?;
    if let Some(path) = &args.small_script {
        resolved.backends.small.mode = "script".to_string();
        resolved.backends.small.script = Some(path.clone());
    }
    if let Some(path) = &args.large_script {
        resolved.backends.large.mode = "script".to_string();
        resolved.backends.large.script = Some(path.clone());
    }
    validate_run_config(&resolved.run)?;
    validate_backend(&resolved.backends.small, "backends.small")?;
    validate_backend(&resolved.backends.large, "backends.large")?;
    if show_config {
        super::print_resolved(&resolved);
    }
    let hash = resolved.hash();

    let tasks_text = std::fs::read_to_string(&args.tasks).map_err(|e| {
        CliError::Validation(format!("cannot read tasks file {}: {e}", args.tasks.display()))
    })?;
    let tasks: Vec<&str> = tasks_text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if tasks.is_empty() {
        log::warn!("tasks file {} contains no tasks", args.tasks.display());
        eprintln!(
            "warning: tasks file {} contains no tasks; nothing to do",
            args.tasks.display()
        );
        return Ok(0);
    }

    let out_dir = args.out.clone().unwrap_or_else(|| {
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        resolved.out_dir.join(format!("run-{stamp}-{hash}"))
    });
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Internal(format!("{}: {e}", out_dir.display())))?;
    super::write_config_snapshot(&out_dir, &resolved)?;

    let tools = match &resolved.lookup_fixture {
        Some(path) => ToolRegistry::from_fixture_file(path).map_err(|e| {
            CliError::Validation(format!("cannot load tool fixture {}: {e}", path.display()))
        })?,
        None => ToolRegistry::with_builtins(Default::default()),
    };

    let workers = args.workers.unwrap_or(resolved.workers);
    let pool = super::thread_pool(workers)?;
    let stdout = Mutex::new(());

    let resolved_ref = &resolved;
    let tools_ref = &tools;
    let out_ref = out_dir.as_path();
    let hash_ref = hash.as_str();
    let terminations: Result<Vec<Termination>, CliError> = pool.install(|| {
        tasks
            .par_iter()
            .enumerate()
            .map(|(i, task)| -> Result<Termination, CliError> {
                let id = format!("task-{i:04}");
                let trajectory =
                    run_one(resolved_ref, tools_ref, args.paced, &id, task).map_err(|e| {
                        CliError::Internal(format!("trajectory {id}: {e}"))
                    })?;
                write_log_atomic(out_ref, &id, &trajectory, hash_ref)?;
                {
                    let _guard = stdout.lock().unwrap();
                    println!(
                        "{id}\t{}\tsteps={}\tlatency={:.3}s",
                        trajectory.termination,
                        trajectory.steps.len(),
                        trajectory.total_latency()
                    );
                }
                Ok(trajectory.termination)
            })
            .collect()
    });
    let terminations = terminations?;

    let failures = terminations
        .iter()
        .filter(|t| **t == Termination::BackendFailure)
        .count();
    println!(
        "batch complete: {} trajectories, {} backend failure(s), logs in {}",
        terminations.len(),
        failures,
        out_dir.display()
    );
    Ok(if failures > 0 { 2 } else { 0 })
}

fn validate_backend(spec: &ResolvedBackend, key: &str) -> Result<(), CliError> {
    match spec.mode.as_str() {
        "script" => {
            if spec.script.is_none() {
                return Err(CliError::Validation(format!(
                    "invalid value for `{key}.script`: script mode needs a script file"
                )));
            }
        }
        "http" => {
            if spec.endpoint.as_deref().unwrap_or("").is_empty() {
                return Err(CliError::Validation(format!(
                    "invalid value for `{key}.endpoint`: http mode needs an endpoint URL"
                )));
            }
        }
        other => {
            return Err(CliError::Validation(format!(
                "invalid value for `{key}.mode`: expected script or http, got `{other}`"
            )));
        }
    }
    Ok(())
}

/// Runs one trajectory with freshly built backends. Backend construction
/// problems become a backend-failure trajectory (empty log), so one broken
/// task does not abort the batch.
fn run_one(
    resolved: &crate::config::ResolvedConfig,
    tools: &ToolRegistry,
    paced: bool,
    id: &str,
    task: &str,
) -> Result<Trajectory, String> {
    let small = build_backend(&resolved.backends.small, &resolved.retry, paced);
    let large = build_backend(&resolved.backends.large, &resolved.retry, paced);
    let (mut small, mut large) = match (small, large) {
        (Ok(s), Ok(l)) => (s, l),
        (Err(e), _) | (_, Err(e)) => {
            log::warn!("trajectory {id}: backend unavailable: {e}");
            return Ok(Trajectory {
                id: id.to_string(),
                steps: Vec::new(),
                termination: Termination::BackendFailure,
                final_answer: None,
            });
        }
    };
    TrajectoryRunner::new(&resolved.run, small.as_mut(), large.as_mut(), tools)
        .with_params(resolved.generation)
        .run(id, task)
        .map_err(|e| e.to_string())
}

fn build_backend(
    spec: &ResolvedBackend,
    retry: &crate::config::ResolvedRetry,
    paced: bool,
) -> Result<Box<dyn ModelBackend>, BackendError> {
    let inner: Box<dyn ModelBackend> = match spec.mode.as_str() {
        "script" => Box::new(ScriptedBackend::from_script_file(
            &spec.model,
            spec.script.as_ref().expect("validated"),
        )?),
        _ => Box::new(HttpChatBackend::new(HttpBackendConfig {
            endpoint: spec.endpoint.clone().expect("validated"),
            model: spec.model.clone(),
            api_key: std::env::var(&spec.api_key_env).ok(),
            timeout: Duration::from_secs(retry.timeout_seconds),
            retry: RetryPolicy {
                max_attempts: retry.max_attempts,
                initial_backoff_ms: retry.initial_backoff_ms,
            },
        })?),
    };
    Ok(if paced {
        Box::new(PacedBackend { inner })
    } else {
        inner
    })
}

/// Replays a backend at its declared latencies so batch timing behaves like
/// a live deployment (used by demos and the interruption test).
struct PacedBackend {
    inner: Box<dyn ModelBackend>,
}

impl ModelBackend for PacedBackend {
    fn label(&self) -> &str {
        self.inner.label()
    }

    fn complete(
        &mut self,
        messages: &[Message],
        params: &GenerationParams,
    ) -> Result<ModelOutput, BackendError> {
        let output = self.inner.complete(messages, params)?;
        if output.latency_seconds > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(output.latency_seconds));
        }
        Ok(output)
    }
}

/// Logs land under their final name only when complete: write to a temp file
/// in the same directory, then rename.
fn write_log_atomic(
    dir: &Path,
    id: &str,
    trajectory: &Trajectory,
    config_hash: &str,
) -> Result<PathBuf, CliError> {
    let mut buffer = Vec::new();
    write_jsonl(&mut buffer, trajectory, config_hash).map_err(CliError::internal)?;
    let final_path = dir.join(format!("{id}.jsonl"));
    let tmp_path = dir.join(format!("{id}.jsonl.tmp"));
    std::fs::write(&tmp_path, &buffer)
        .map_err(|e| CliError::Internal(format!("{}: {e}", tmp_path.display())))?;
    std::fs::rename(&tmp_path, &final_path)
        .map_err(|e| CliError::Internal(format!("{}: {e}", final_path.display())))?;
    Ok(final_path)
}
