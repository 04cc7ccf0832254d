use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tandem::metrics::{
    export_report, pareto_points, per_step_tps, summarize, write_xy_series, MetricSummary,
    ReportFormat,
};
use tandem::trajectory::{read_jsonl_file, Trajectory};

use crate::config::ReportArgs;
use crate::CliError;

pub fn run(args: &ReportArgs) -> Result<u8, CliError> {
    let mut groups: Vec<(String, Vec<Trajectory>)> = Vec::new();
    for path in &args.logs {
        let label = group_label(path);
        if groups.iter().any(|(l, _)| *l == label) {
            return Err(CliError::Validation(format!(
                "duplicate log group label `{label}`; point --logs at distinctly named paths"
            )));
        }
        let trajectories = load_group(path)?;
        if trajectories.is_empty() {
            return Err(CliError::Validation(format!(
                "no trajectories found under {}",
                path.display()
            )));
        }
        groups.push((label, trajectories));
    }

    let baseline_total = groups
        .iter()
        .find(|(label, _)| *label == args.baseline)
        .map(|(_, trajectories)| trajectories.iter().map(Trajectory::total_latency).sum::<f64>())
        .ok_or_else(|| {
            let labels: Vec<&str> = groups.iter().map(|(l, _)| l.as_str()).collect();
            CliError::Validation(format!(
                "baseline group `{}` not found among [{}]; set --baseline",
                args.baseline,
                labels.join(", ")
            ))
        })?;

    let scores = args.scores.as_ref().map(load_scores).transpose()?;

    let mut summaries: Vec<MetricSummary> = Vec::new();
    let mut quality_points: Vec<(String, f64, f64)> = Vec::new();
    for (label, trajectories) in &groups {
        let summary = summarize(label, trajectories, baseline_total)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let quality = match &scores {
            Some(table) => mean_external_score(label, trajectories, table)?,
            None => summary.success_rate,
        };
        quality_points.push((label.clone(), summary.speedup_vs_baseline, quality));
        summaries.push(summary);
    }
    let pareto = pareto_points(&quality_points);

    super::print_summaries(&summaries);
    println!();
    println!("{:<44} {:>8} {:>9} {:>10}", "pareto", "speedup", "quality", "dominated");
    for p in &pareto {
        println!(
            "{:<44} {:>8.3} {:>9.4} {:>10}",
            p.label, p.speedup, p.quality, p.dominated
        );
    }

    if let Some(out_dir) = &args.out {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Internal(format!("{}: {e}", out_dir.display())))?;
        export_report(out_dir.join("summary.csv"), &summaries, ReportFormat::Csv)
            .map_err(CliError::internal)?;
        export_report(out_dir.join("summary.jsonl"), &summaries, ReportFormat::Jsonl)
            .map_err(CliError::internal)?;
        super::write_pareto_csv(&out_dir.join("pareto.csv"), &pareto)?;
        if let Some(trajectory_id) = &args.series {
            write_series(out_dir, trajectory_id, &groups)?;
        }
        println!("report files in {}", out_dir.display());
    } else if args.series.is_some() {
        return Err(CliError::Validation(
            "`--series` needs `--out` to know where to write the series files".to_string(),
        ));
    }
    Ok(0)
}

fn group_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_group(path: &Path) -> Result<Vec<Trajectory>, CliError> {
    let mut files: Vec<PathBuf> = Vec::new();
    if path.is_dir() {
        for entry in std::fs::read_dir(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        {
            let entry = entry.map_err(|e| CliError::Internal(e.to_string()))?;
            let p = entry.path();
            if p.extension().is_some_and(|ext| ext == "jsonl") {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    let mut trajectories = Vec::new();
    for file in files {
        trajectories.extend(
            read_jsonl_file(&file)
                .map_err(|e| CliError::Validation(format!("{}: {e}", file.display())))?,
        );
    }
    Ok(trajectories)
}

fn load_scores(path: &PathBuf) -> Result<BTreeMap<String, f64>, CliError> {
    let data = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read scores file {}: {e}", path.display())))?;
    serde_json::from_str(&data)
        .map_err(|e| CliError::Validation(format!("invalid scores file {}: {e}", path.display())))
}

/// Judge-assigned quality for a group: the mean external score over its
/// trajectories. Ids without a score are skipped with a warning; a group with
/// no scored trajectory at all is an input error.
fn mean_external_score(
    label: &str,
    trajectories: &[Trajectory],
    table: &BTreeMap<String, f64>,
) -> Result<f64, CliError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for trajectory in trajectories {
        match table.get(&trajectory.id) {
            Some(score) => {
                sum += *score;
                count += 1;
            }
            None => log::warn!("no external score for trajectory {}", trajectory.id),
        }
    }
    if count == 0 {
        return Err(CliError::Validation(format!(
            "scores file has no entry for any trajectory in group `{label}`"
        )));
    }
    Ok(sum / count as f64)
}

fn write_series(
    out_dir: &Path,
    trajectory_id: &str,
    groups: &[(String, Vec<Trajectory>)],
) -> Result<(), CliError> {
    let trajectory = groups
        .iter()
        .flat_map(|(_, trajectories)| trajectories.iter())
        .find(|t| t.id == trajectory_id)
        .ok_or_else(|| {
            CliError::Validation(format!("trajectory `{trajectory_id}` not found in any group"))
        })?;
    let series = per_step_tps(trajectory);

    let staircase: Vec<(f64, f64)> = series
        .cumulative_latency
        .iter()
        .enumerate()
        .map(|(i, &y)| ((i + 1) as f64, y))
        .collect();
    let tps: Vec<(f64, f64)> = series
        .tps
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|y| ((i + 1) as f64, y)))
        .collect();

    for (name, headers, data) in [
        ("staircase.csv", ("step", "cumulative_latency_seconds"), &staircase),
        ("tps.csv", ("step", "tokens_per_second"), &tps),
    ] {
        let mut buffer = Vec::new();
        write_xy_series(&mut buffer, headers, data).map_err(CliError::internal)?;
        let path = out_dir.join(name);
        std::fs::write(&path, buffer)
            .map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
