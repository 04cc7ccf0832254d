mod report;
mod run;
mod simulate;
mod sweep;
mod validate;

use std::io::Write;
use std::path::Path;

use tandem::metrics::{MetricSummary, ParetoPoint};

use crate::config::{Cli, Command, ResolvedConfig};
use crate::CliError;

pub fn dispatch(cli: Cli) -> Result<u8, CliError> {
    let file = crate::config::load_file(cli.config.as_deref())?;
    match cli.command {
        Command::Validate(args) => validate::run(&args, &file, cli.show_config),
        Command::Run(args) => run::run(&args, &file, cli.show_config),
        Command::Simulate(args) => simulate::run(&args, &file, cli.show_config),
        Command::Report(args) => report::run(&args),
        Command::Sweep(args) => sweep::run(&args, &file, cli.show_config),
    }
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(CliError::internal)
}

pub fn print_resolved(config: &ResolvedConfig) {
    match serde_json::to_string_pretty(config) {
        Ok(json) => println!("{json}"),
        Err(e) => eprintln!("cannot render resolved config: {e}"),
    }
}

/// Snapshot of the resolved configuration inside a run directory, so every
/// experiment stays self-describing.
pub fn write_config_snapshot(dir: &Path, config: &ResolvedConfig) -> Result<(), CliError> {
    let path = dir.join("config.json");
    let json = serde_json::to_string_pretty(config).map_err(CliError::internal)?;
    std::fs::write(&path, json + "\n")
        .map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

pub fn print_summaries(summaries: &[MetricSummary]) {
    println!(
        "{:<44} {:>6} {:>8} {:>11} {:>14} {:>8} {:>8}",
        "policy", "n", "success", "mean_steps", "total_lat_s", "switch", "speedup"
    );
    for s in summaries {
        println!(
            "{:<44} {:>6} {:>8.4} {:>11.2} {:>14.2} {:>8.4} {:>8.3}",
            s.policy,
            s.n_trajectories,
            s.success_rate,
            s.mean_steps,
            s.total_latency_seconds,
            s.switching_ratio,
            s.speedup_vs_baseline
        );
    }
}

pub fn write_pareto_csv(path: &Path, points: &[ParetoPoint]) -> Result<(), CliError> {
    let mut buffer = Vec::new();
    writeln!(buffer, "label,speedup,quality,dominated").map_err(CliError::internal)?;
    for p in points {
        writeln!(buffer, "{},{},{},{}", p.label, p.speedup, p.quality, p.dominated)
            .map_err(CliError::internal)?;
    }
    std::fs::write(path, buffer).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}
