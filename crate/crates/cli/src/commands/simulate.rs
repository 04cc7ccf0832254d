use std::path::PathBuf;

use tandem::escalation::BudgetSchedule;
use tandem::metrics::{export_report, pareto_from_summaries, ReportFormat};
use tandem::sim::{run_experiment_with, ExperimentOptions, Policy, SimError, SimOptions, WorldModel};

use crate::config::{resolve, ControllerArgs, FileConfig, ResolvedConfig, SimulateArgs};
use crate::CliError;

pub fn run(args: &SimulateArgs, file: &FileConfig, show_config: bool) -> Result<u8, CliError> {
    let mut resolved = resolve(&args.schedule, &ControllerArgs::default(), file)?;
    let settings = merge_sim_settings(
        &mut resolved,
        args.world.as_ref(),
        args.trials,
        args.seed,
        args.max_steps,
        args.epsilon,
        args.random_p,
        args.warmup,
    )?;
    if show_config {
        super::print_resolved(&resolved);
    }
    let hash = resolved.hash();

    let world = load_world(&settings.world)?;
    let policies = parse_policies(
        args.policies.as_deref().unwrap_or(DEFAULT_POLICY_SET),
        &resolved.run.schedule,
        settings.warmup,
        settings.random_p,
    )?;

    let workers = args.workers.unwrap_or(resolved.workers);
    let summaries = run_policies(&world, &policies, &settings, workers)?;

    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| resolved.out_dir.join(format!("sim-{hash}")));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Internal(format!("{}: {e}", out_dir.display())))?;
    super::write_config_snapshot(&out_dir, &resolved)?;
    export_report(out_dir.join("summary.csv"), &summaries, ReportFormat::Csv)
        .map_err(CliError::internal)?;
    export_report(out_dir.join("summary.jsonl"), &summaries, ReportFormat::Jsonl)
        .map_err(CliError::internal)?;
    super::write_pareto_csv(&out_dir.join("pareto.csv"), &pareto_from_summaries(&summaries))?;

    super::print_summaries(&summaries);
    println!("report files in {}", out_dir.display());
    Ok(0)
}

pub const DEFAULT_POLICY_SET: &str = "always_small,always_large,random,escalation";

pub struct SimSettings {
    pub world: PathBuf,
    pub trials: u32,
    pub seed: u64,
    pub max_steps: u32,
    pub epsilon: f64,
    pub random_p: f64,
    pub warmup: u32,
}

/// Applies flag overrides onto the resolved sim section and folds the
/// effective values back into it, so the config hash (and therefore the
/// default output directory) reflects what actually ran.
#[allow(clippy::too_many_arguments)]
pub fn merge_sim_settings(
    resolved: &mut ResolvedConfig,
    world: Option<&PathBuf>,
    trials: Option<u32>,
    seed: Option<u64>,
    max_steps: Option<u32>,
    epsilon: Option<f64>,
    random_p: Option<f64>,
    warmup: Option<u32>,
) -> Result<SimSettings, CliError> {
    let world = world
        .cloned()
        .or_else(|| resolved.sim.world.clone())
        .ok_or_else(|| {
            CliError::Validation(
                "missing value for `world`: pass --world or set [sim].world".to_string(),
            )
        })?;
    let seed = seed.or(resolved.sim.seed).ok_or_else(|| {
        CliError::Validation(
            "missing value for `seed`: simulation requires an explicit seed (--seed or [sim].seed)"
                .to_string(),
        )
    })?;
    let settings = SimSettings {
        world: world.clone(),
        trials: trials.unwrap_or(resolved.sim.trials),
        seed,
        max_steps: max_steps.unwrap_or(resolved.sim.max_steps),
        epsilon: epsilon.unwrap_or(resolved.sim.epsilon),
        random_p: random_p.unwrap_or(resolved.sim.random_p),
        warmup: warmup.unwrap_or(resolved.sim.warmup),
    };
    if settings.trials == 0 {
        return Err(CliError::Validation(
            "invalid value for `trials`: must be at least 1".to_string(),
        ));
    }
    resolved.sim.world = Some(world);
    resolved.sim.trials = settings.trials;
    resolved.sim.seed = Some(settings.seed);
    resolved.sim.max_steps = settings.max_steps;
    resolved.sim.epsilon = settings.epsilon;
    resolved.sim.random_p = settings.random_p;
    resolved.sim.warmup = settings.warmup;
    Ok(settings)
}

pub fn load_world(path: &PathBuf) -> Result<WorldModel, CliError> {
    WorldModel::from_file(path).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn parse_policies(
    spec: &str,
    schedule: &BudgetSchedule,
    warmup: u32,
    random_p: f64,
) -> Result<Vec<Policy>, CliError> {
    let mut policies = Vec::new();
    for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let policy = match token {
            "always_small" => Policy::AlwaysSmall,
            "always_large" => Policy::AlwaysLarge,
            "random" => Policy::Random { p_large: random_p },
            "escalation" => Policy::Escalation {
                schedule: schedule.clone(),
                warmup,
            },
            "escalation_static" => Policy::Escalation {
                schedule: BudgetSchedule::Static {
                    base: schedule.base(),
                },
                warmup,
            },
            other => {
                return Err(CliError::Validation(format!(
                    "invalid value for `policies`: unknown policy `{other}`"
                )));
            }
        };
        policies.push(policy);
    }
    if policies.is_empty() {
        return Err(CliError::Validation(
            "invalid value for `policies`: the set is empty".to_string(),
        ));
    }
    Ok(policies)
}

pub fn run_policies(
    world: &WorldModel,
    policies: &[Policy],
    settings: &SimSettings,
    workers: usize,
) -> Result<Vec<tandem::metrics::MetricSummary>, CliError> {
    let options = ExperimentOptions {
        n_trials: settings.trials,
        seed: settings.seed,
        sim: SimOptions {
            max_steps: settings.max_steps,
            progress_noise: settings.epsilon,
        },
    };
    let pool = super::thread_pool(workers)?;
    pool.install(|| run_experiment_with(world, policies, &options))
        .map_err(|e| match e {
            SimError::Metric(inner) => CliError::internal(inner),
            other => CliError::Validation(other.to_string()),
        })
}
