use tandem::escalation::BudgetSchedule;
use tandem::metrics::{export_report, write_xy_series, MetricSummary, ReportFormat};
use tandem::sim::Policy;

use crate::config::{resolve, resolve_schedule, ControllerArgs, FileConfig, SweepArgs};
use crate::CliError;

use super::simulate::{load_world, merge_sim_settings};

pub fn run(args: &SweepArgs, file: &FileConfig, show_config: bool) -> Result<u8, CliError> {
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

    // Grid values default to the resolved single value of each parameter.
    let reference = resolve_schedule(&args.schedule, &file.schedule)?;
    let kind = args
        .schedule
        .schedule
        .clone()
        .or_else(|| file.schedule.kind.clone())
        .unwrap_or_else(|| "linear".to_string());
    let base = reference.base();
    let caps = match &args.bmax_values {
        Some(list) => parse_u32_list(list, "bmax-values")?,
        None => vec![reference.max_budget()],
    };

    let grid: Vec<BudgetSchedule> = match kind.as_str() {
        "linear" => {
            let growths = match &args.k_values {
                Some(list) => parse_u32_list(list, "k-values")?,
                None => vec![0, 1, 2, 3],
            };
            let mut grid = Vec::new();
            for &cap in &caps {
                for &growth in &growths {
                    grid.push(BudgetSchedule::LinearBounded { base, growth, cap });
                }
            }
            grid
        }
        "sigmoid" => {
            let (default_rate, default_midpoint) = match reference {
                BudgetSchedule::Sigmoid { rate, midpoint, .. } => (rate, midpoint),
                _ => unreachable!("sigmoid kind resolves to a sigmoid schedule"),
            };
            let rates = match &args.alpha_values {
                Some(list) => parse_f64_list(list, "alpha-values")?,
                None => vec![default_rate],
            };
            let midpoints = match &args.beta_values {
                Some(list) => parse_f64_list(list, "beta-values")?,
                None => vec![default_midpoint],
            };
            let mut grid = Vec::new();
            for &cap in &caps {
                for &rate in &rates {
                    for &midpoint in &midpoints {
                        grid.push(BudgetSchedule::Sigmoid {
                            base,
                            cap,
                            rate,
                            midpoint,
                        });
                    }
                }
            }
            grid
        }
        other => {
            return Err(CliError::Validation(format!(
                "invalid value for `schedule`: sweep needs linear or sigmoid, got `{other}`"
            )));
        }
    };
    for schedule in &grid {
        schedule
            .validate()
            .map_err(|e| CliError::Validation(format!("invalid grid point: {e}")))?;
    }

    let mut policies = vec![
        Policy::AlwaysSmall,
        Policy::AlwaysLarge,
        Policy::Random {
            p_large: settings.random_p,
        },
    ];
    let baseline_count = policies.len();
    policies.extend(grid.iter().map(|schedule| Policy::Escalation {
        schedule: schedule.clone(),
        warmup: settings.warmup,
    }));

    let workers = args.workers.unwrap_or(resolved.workers);
    let summaries = super::simulate::run_policies(&world, &policies, &settings, workers)?;

    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| resolved.out_dir.join(format!("sweep-{hash}")));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Internal(format!("{}: {e}", out_dir.display())))?;
    super::write_config_snapshot(&out_dir, &resolved)?;
    export_report(out_dir.join("sweep.csv"), &summaries, ReportFormat::Csv)
        .map_err(CliError::internal)?;
    export_report(out_dir.join("sweep.jsonl"), &summaries, ReportFormat::Jsonl)
        .map_err(CliError::internal)?;

    // Plot-ready growth-rate series when the sweep varies k over one cap.
    if kind == "linear" && caps.len() == 1 {
        let rows: Vec<(&BudgetSchedule, &MetricSummary)> =
            grid.iter().zip(&summaries[baseline_count..]).collect();
        let speedup_series: Vec<(f64, f64)> = rows
            .iter()
            .map(|(schedule, summary)| {
                let BudgetSchedule::LinearBounded { growth, .. } = schedule else {
                    unreachable!("linear sweep grid");
                };
                (f64::from(*growth), summary.speedup_vs_baseline)
            })
            .collect();
        let quality_series: Vec<(f64, f64)> = rows
            .iter()
            .map(|(schedule, summary)| {
                let BudgetSchedule::LinearBounded { growth, .. } = schedule else {
                    unreachable!("linear sweep grid");
                };
                (f64::from(*growth), summary.success_rate)
            })
            .collect();
        for (name, headers, series) in [
            ("k_speedup.csv", ("k", "speedup"), &speedup_series),
            ("k_success.csv", ("k", "success_rate"), &quality_series),
        ] {
            let mut buffer = Vec::new();
            write_xy_series(&mut buffer, headers, series).map_err(CliError::internal)?;
            let path = out_dir.join(name);
            std::fs::write(&path, buffer)
                .map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
        }
    }

    super::print_summaries(&summaries);
    println!("sweep files in {}", out_dir.display());
    Ok(0)
}

fn parse_u32_list(list: &str, key: &str) -> Result<Vec<u32>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<u32>().map_err(|e| {
                CliError::Validation(format!("invalid value for `{key}`: `{t}`: {e}"))
            })
        })
        .collect()
}

fn parse_f64_list(list: &str, key: &str) -> Result<Vec<f64>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|e| {
                CliError::Validation(format!("invalid value for `{key}`: `{t}`: {e}"))
            })
        })
        .collect()
}
