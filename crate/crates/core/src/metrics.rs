//! Trajectory metrics and report exporters: switching ratio, speedup,
//! large-token ratio, per-step throughput, Pareto dominance flags, and
//! CSV/JSONL report files.
//!
//! A metric that has no defined value (no multi-step trajectories, zero
//! total tokens, a non-positive latency) is an explicit
//! [`MetricError::Undefined`], never a silent NaN — aggregation over many
//! trajectories must not launder undefined cells.
//!
//! Ratio-valued summary fields (`success_rate`, `switching_ratio`,
//! `large_token_ratio`) are reported at 4-decimal precision; they are
//! quantized when the summary is built, so CSV (which prints ratios with 4
//! decimals) and JSONL exports round-trip losslessly. All other fields keep
//! full precision.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::trajectory::{Termination, TierRank, Trajectory};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("undefined metric {metric}: {reason}")]
    Undefined {
        metric: &'static str,
        reason: String,
    },
    #[error("invalid input for {metric}: {reason}")]
    InvalidInput {
        metric: &'static str,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
}

/// Pooled switching ratio: the fraction of adjacent step pairs whose tiers
/// differ, summed over all trajectories. Trajectories with fewer than two
/// steps contribute to neither numerator nor denominator; if nothing remains
/// the metric is undefined.
pub fn switching_ratio(trajectories: &[Trajectory]) -> Result<f64, MetricError> {
    let mut switches: u64 = 0;
    let mut transitions: u64 = 0;
    for trajectory in trajectories {
        if trajectory.steps.len() < 2 {
            continue;
        }
        transitions += (trajectory.steps.len() - 1) as u64;
        switches += trajectory
            .steps
            .windows(2)
            .filter(|w| w[0].tier.rank != w[1].tier.rank)
            .count() as u64;
    }
    if transitions == 0 {
        return Err(MetricError::Undefined {
            metric: "switching_ratio",
            reason: "no trajectory with at least two steps".to_string(),
        });
    }
    Ok(switches as f64 / transitions as f64)
}

/// Total latency of the baseline divided by total latency of the evaluated
/// method. Both totals must be positive and finite.
pub fn speedup(baseline_total_latency: f64, method_total_latency: f64) -> Result<f64, MetricError> {
    for (name, value) in [
        ("baseline", baseline_total_latency),
        ("method", method_total_latency),
    ] {
        if !(value.is_finite() && value > 0.0) {
            return Err(MetricError::InvalidInput {
                metric: "speedup",
                reason: format!("{name} total latency must be positive, got {value}"),
            });
        }
    }
    Ok(baseline_total_latency / method_total_latency)
}

/// Fraction of completion tokens generated by the large tier within one
/// trajectory. Undefined when the trajectory produced no completion tokens.
pub fn large_token_ratio(trajectory: &Trajectory) -> Result<f64, MetricError> {
    large_token_ratio_pooled(std::slice::from_ref(trajectory))
}

/// Same ratio pooled over several trajectories; pooling is the token-weighted
/// average of the individual ratios.
pub fn large_token_ratio_pooled(trajectories: &[Trajectory]) -> Result<f64, MetricError> {
    let mut large: u64 = 0;
    let mut total: u64 = 0;
    for trajectory in trajectories {
        for step in &trajectory.steps {
            total += step.completion_tokens;
            if step.tier.rank == TierRank::Large {
                large += step.completion_tokens;
            }
        }
    }
    if total == 0 {
        return Err(MetricError::Undefined {
            metric: "large_token_ratio",
            reason: "no completion tokens".to_string(),
        });
    }
    Ok(large as f64 / total as f64)
}

/// Per-step throughput and the cumulative-latency staircase of one
/// trajectory. A step with non-positive latency has no defined throughput;
/// its entry is `None` (flagged, not fatal).
#[derive(Debug, Clone, PartialEq)]
pub struct StepSeries {
    pub tps: Vec<Option<f64>>,
    pub cumulative_latency: Vec<f64>,
}

pub fn per_step_tps(trajectory: &Trajectory) -> StepSeries {
    let mut tps = Vec::with_capacity(trajectory.steps.len());
    let mut cumulative_latency = Vec::with_capacity(trajectory.steps.len());
    let mut running = 0.0;
    for step in &trajectory.steps {
        running += step.latency_seconds;
        cumulative_latency.push(running);
        if step.latency_seconds > 0.0 {
            tps.push(Some(step.completion_tokens as f64 / step.latency_seconds));
        } else {
            tps.push(None);
        }
    }
    StepSeries {
        tps,
        cumulative_latency,
    }
}

/// Per-policy aggregate over an experiment or a batch of logs. One row of
/// every report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub policy: String,
    pub n_trajectories: u64,
    /// Fraction of trajectories that terminated with an answer (4-decimal
    /// precision).
    pub success_rate: f64,
    pub mean_steps: f64,
    pub total_latency_seconds: f64,
    pub speedup_vs_baseline: f64,
    /// Pooled switching ratio (4-decimal precision).
    pub switching_ratio: f64,
    /// Pooled large-token ratio (4-decimal precision).
    pub large_token_ratio: f64,
    /// Mean throughput at each step index, averaged over the trajectories
    /// that reach that index (and have a defined value there). The series is
    /// truncated at the first index with no defined sample.
    pub per_step_tps: Vec<f64>,
}

fn quantize_ratio(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Builds the summary row for one policy. `baseline_total_latency` is the
/// total latency of the always-large reference on the same inputs.
pub fn summarize(
    policy: &str,
    trajectories: &[Trajectory],
    baseline_total_latency: f64,
) -> Result<MetricSummary, MetricError> {
    if trajectories.is_empty() {
        return Err(MetricError::InvalidInput {
            metric: "summary",
            reason: "no trajectories".to_string(),
        });
    }
    let n = trajectories.len() as u64;
    let successes = trajectories
        .iter()
        .filter(|t| t.termination == Termination::AnswerFound)
        .count() as f64;
    let total_steps: u64 = trajectories.iter().map(|t| t.steps.len() as u64).sum();
    let total_latency: f64 = trajectories.iter().map(Trajectory::total_latency).sum();

    Ok(MetricSummary {
        policy: policy.to_string(),
        n_trajectories: n,
        success_rate: quantize_ratio(successes / n as f64),
        mean_steps: total_steps as f64 / n as f64,
        total_latency_seconds: total_latency,
        speedup_vs_baseline: speedup(baseline_total_latency, total_latency)?,
        switching_ratio: quantize_ratio(switching_ratio(trajectories)?),
        large_token_ratio: quantize_ratio(large_token_ratio_pooled(trajectories)?),
        per_step_tps: mean_tps_by_index(trajectories),
    })
}

fn mean_tps_by_index(trajectories: &[Trajectory]) -> Vec<f64> {
    let longest = trajectories
        .iter()
        .map(|t| t.steps.len())
        .max()
        .unwrap_or(0);
    let mut means = Vec::with_capacity(longest);
    let series: Vec<StepSeries> = trajectories.iter().map(per_step_tps).collect();
    for index in 0..longest {
        let samples: Vec<f64> = series
            .iter()
            .filter_map(|s| s.tps.get(index).copied().flatten())
            .collect();
        if samples.is_empty() {
            break;
        }
        means.push(samples.iter().sum::<f64>() / samples.len() as f64);
    }
    means
}

/// A (speedup, quality) point with its dominance flag. A point is dominated
/// iff another point is at least as good in both coordinates and strictly
/// better in at least one; duplicates therefore never flag each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub label: String,
    pub speedup: f64,
    pub quality: f64,
    pub dominated: bool,
}

/// Dominance flags for raw (speedup, quality) pairs, in input order.
pub fn pareto_flags(points: &[(f64, f64)]) -> Vec<bool> {
    points
        .iter()
        .map(|&(s, q)| {
            points.iter().any(|&(other_s, other_q)| {
                other_s >= s && other_q >= q && (other_s > s || other_q > q)
            })
        })
        .collect()
}

/// Flags dominance over labeled points and orders the result by speedup.
pub fn pareto_points(points: &[(String, f64, f64)]) -> Vec<ParetoPoint> {
    let flags = pareto_flags(
        &points
            .iter()
            .map(|(_, s, q)| (*s, *q))
            .collect::<Vec<_>>(),
    );
    let mut result: Vec<ParetoPoint> = points
        .iter()
        .zip(flags)
        .map(|((label, s, q), dominated)| ParetoPoint {
            label: label.clone(),
            speedup: *s,
            quality: *q,
            dominated,
        })
        .collect();
    result.sort_by(|a, b| {
        a.speedup
            .total_cmp(&b.speedup)
            .then(a.quality.total_cmp(&b.quality))
            .then(a.label.cmp(&b.label))
    });
    result
}

/// Pareto view of summary rows with success rate as the quality axis. For
/// externally judged runs, pass explicit (label, speedup, quality) triples to
/// [`pareto_points`] instead.
pub fn pareto_from_summaries(summaries: &[MetricSummary]) -> Vec<ParetoPoint> {
    let points: Vec<(String, f64, f64)> = summaries
        .iter()
        .map(|s| (s.policy.clone(), s.speedup_vs_baseline, s.success_rate))
        .collect();
    pareto_points(&points)
}

/// Spearman rank correlation with average ranks for ties. Undefined when
/// either series is constant.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(MetricError::InvalidInput {
            metric: "spearman_rho",
            reason: "series must have equal length of at least 2".to_string(),
        });
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for i in 0..xs.len() {
        let dx = rx[i] - mean;
        let dy = ry[i] - mean;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(MetricError::Undefined {
            metric: "spearman_rho",
            reason: "constant series has no rank ordering".to_string(),
        });
    }
    Ok(cov / (var_x * var_y).sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut result = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Average rank across the tie group; ranks are 1-based.
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            result[idx] = rank;
        }
        i = j + 1;
    }
    result
}

pub const CSV_HEADER: &str = "policy,n_trajectories,success_rate,mean_steps,total_latency_seconds,speedup_vs_baseline,switching_ratio,large_token_ratio,per_step_tps";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Jsonl,
}

/// Writes summary rows in the stable documented column order. Ratio columns
/// print with 4 decimals (their stored precision); everything else prints at
/// full round-trip precision. An empty summary list yields a header-only CSV.
pub fn write_report<W: Write>(
    writer: &mut W,
    summaries: &[MetricSummary],
    format: ReportFormat,
) -> std::io::Result<()> {
    match format {
        ReportFormat::Csv => {
            writeln!(writer, "{CSV_HEADER}")?;
            for s in summaries {
                let tps = s
                    .per_step_tps
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(";");
                writeln!(
                    writer,
                    "{},{},{:.4},{},{},{},{:.4},{:.4},{}",
                    csv_escape(&s.policy),
                    s.n_trajectories,
                    s.success_rate,
                    s.mean_steps,
                    s.total_latency_seconds,
                    s.speedup_vs_baseline,
                    s.switching_ratio,
                    s.large_token_ratio,
                    tps
                )?;
            }
        }
        ReportFormat::Jsonl => {
            for s in summaries {
                serde_json::to_writer(&mut *writer, s)?;
                writer.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

pub fn export_report(
    path: impl AsRef<Path>,
    summaries: &[MetricSummary],
    format: ReportFormat,
) -> Result<(), MetricError> {
    let path = path.as_ref();
    let mut buffer = Vec::new();
    write_report(&mut buffer, summaries, format).map_err(|source| MetricError::Io {
        path: path.display().to_string(),
        source,
    })?;
    std::fs::write(path, buffer).map_err(|source| MetricError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a report back. Inverse of [`write_report`] for both formats.
pub fn read_report<R: BufRead>(
    reader: R,
    format: ReportFormat,
) -> Result<Vec<MetricSummary>, MetricError> {
    let name = "<stream>";
    let mut summaries = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.map_err(|source| MetricError::Io {
            path: name.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match format {
            ReportFormat::Csv => {
                if line_no == 1 {
                    if line != CSV_HEADER {
                        return Err(MetricError::Malformed {
                            path: name.to_string(),
                            line: line_no,
                            message: "unexpected CSV header".to_string(),
                        });
                    }
                    continue;
                }
                summaries.push(parse_csv_row(&line).map_err(|message| MetricError::Malformed {
                    path: name.to_string(),
                    line: line_no,
                    message,
                })?);
            }
            ReportFormat::Jsonl => {
                summaries.push(serde_json::from_str(&line).map_err(|e| {
                    MetricError::Malformed {
                        path: name.to_string(),
                        line: line_no,
                        message: e.to_string(),
                    }
                })?);
            }
        }
    }
    Ok(summaries)
}

pub fn import_report(
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<Vec<MetricSummary>, MetricError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| MetricError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_report(std::io::BufReader::new(file), format)
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn parse_csv_row(line: &str) -> Result<MetricSummary, String> {
    let fields = split_csv(line);
    if fields.len() != 9 {
        return Err(format!("expected 9 columns, got {}", fields.len()));
    }
    let number = |i: usize, name: &str| -> Result<f64, String> {
        fields[i]
            .parse::<f64>()
            .map_err(|e| format!("column {name}: {e}"))
    };
    let per_step_tps = if fields[8].is_empty() {
        Vec::new()
    } else {
        fields[8]
            .split(';')
            .map(|v| v.parse::<f64>().map_err(|e| format!("per_step_tps: {e}")))
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(MetricSummary {
        policy: fields[0].clone(),
        n_trajectories: fields[1]
            .parse::<u64>()
            .map_err(|e| format!("column n_trajectories: {e}"))?,
        success_rate: number(2, "success_rate")?,
        mean_steps: number(3, "mean_steps")?,
        total_latency_seconds: number(4, "total_latency_seconds")?,
        speedup_vs_baseline: number(5, "speedup_vs_baseline")?,
        switching_ratio: number(6, "switching_ratio")?,
        large_token_ratio: number(7, "large_token_ratio")?,
        per_step_tps,
    })
}

fn split_csv(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    current.push('"');
                } else {
                    in_quotes = false;
                }
            }
            '"' => in_quotes = true,
            ',' if !in_quotes => {
                fields.push(std::mem::take(&mut current));
            }
            c => current.push(c),
        }
    }
    fields.push(current);
    fields
}

/// Plot-ready two-column series (staircase, TPS curves, sweep figures).
pub fn write_xy_series<W: Write>(
    writer: &mut W,
    headers: (&str, &str),
    series: &[(f64, f64)],
) -> std::io::Result<()> {
    writeln!(writer, "{},{}", headers.0, headers.1)?;
    for (x, y) in series {
        writeln!(writer, "{x},{y}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::escalation::EscalationLevel;
    use crate::trajectory::{Phase, StepAction, StepRecord, Tier};

    fn step(index: u32, rank: TierRank, tokens: u64, latency: f64) -> StepRecord {
        let tier = match rank {
            TierRank::Small => Tier::small("s"),
            TierRank::Large => Tier::large("l"),
        };
        StepRecord {
            index,
            tier,
            phase: Phase::Collaborative,
            prompt_tokens: 0,
            completion_tokens: tokens,
            latency_seconds: latency,
            progress: None,
            level_after: EscalationLevel(0),
            action: StepAction::Think,
        }
    }

    fn trajectory(id: &str, tiers: &[TierRank]) -> Trajectory {
        trajectory_with(id, tiers, 10, 1.0)
    }

    fn trajectory_with(id: &str, tiers: &[TierRank], tokens: u64, latency: f64) -> Trajectory {
        Trajectory {
            id: id.to_string(),
            steps: tiers
                .iter()
                .enumerate()
                .map(|(i, &rank)| step(i as u32 + 1, rank, tokens, latency))
                .collect(),
            termination: Termination::AnswerFound,
            final_answer: Some("done".to_string()),
        }
    }

    use TierRank::{Large as L, Small as S};

    #[test]
    fn switching_ratio_counts_adjacent_tier_changes() {
        let t = trajectory("a", &[S, S, L, S]);
        assert_eq!(switching_ratio(&[t]).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn switching_ratio_is_zero_without_alternation() {
        let t = trajectory("a", &[S, S, S, S, S]);
        assert_eq!(switching_ratio(&[t]).unwrap(), 0.0);
    }

    #[test]
    fn switching_ratio_pools_transitions_across_trajectories() {
        let a = trajectory("a", &[S, L]);
        let b = trajectory("b", &[L, L, L]);
        assert_eq!(switching_ratio(&[a, b]).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn switching_ratio_excludes_single_step_trajectories() {
        let single = trajectory("single", &[L]);
        let multi = trajectory("multi", &[S, L, S]);
        // The single-step trajectory changes neither numerator nor denominator.
        assert_eq!(
            switching_ratio(&[single.clone(), multi.clone()]).unwrap(),
            switching_ratio(&[multi]).unwrap()
        );
        assert!(matches!(
            switching_ratio(&[single]),
            Err(MetricError::Undefined { .. })
        ));
        assert!(matches!(
            switching_ratio(&[]),
            Err(MetricError::Undefined { .. })
        ));
    }

    #[test]
    fn switching_ratio_is_invariant_under_reorder_and_relabel() {
        let a = trajectory("a", &[S, L, L, S]);
        let b = trajectory("b", &[L, L, S]);
        let forward = switching_ratio(&[a.clone(), b.clone()]).unwrap();
        let reversed = switching_ratio(&[b.clone(), a.clone()]).unwrap();
        assert_eq!(forward, reversed);

        let flip = |t: &Trajectory| {
            let mut flipped = t.clone();
            for s in &mut flipped.steps {
                s.tier = match s.tier.rank {
                    TierRank::Small => Tier::large("l"),
                    TierRank::Large => Tier::small("s"),
                };
            }
            flipped
        };
        assert_eq!(switching_ratio(&[flip(&a), flip(&b)]).unwrap(), forward);
    }

    #[test]
    fn speedup_is_the_latency_ratio() {
        assert_eq!(speedup(100.0, 100.0).unwrap(), 1.0);
        assert!((speedup(136.0, 100.0).unwrap() - 1.36).abs() < 1e-12);
        assert_eq!(speedup(50.0, 100.0).unwrap(), 0.5);
        assert!(matches!(
            speedup(0.0, 1.0),
            Err(MetricError::InvalidInput { .. })
        ));
        assert!(matches!(
            speedup(1.0, -2.0),
            Err(MetricError::InvalidInput { .. })
        ));
    }

    #[test]
    fn speedup_reciprocal_identity() {
        let ab = speedup(73.25, 19.5).unwrap();
        let ba = speedup(19.5, 73.25).unwrap();
        assert!((ab * ba - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_token_ratio_examples() {
        assert_eq!(large_token_ratio(&trajectory("a", &[L, L])).unwrap(), 1.0);
        assert_eq!(large_token_ratio(&trajectory("a", &[S, S, S])).unwrap(), 0.0);

        let mut t = trajectory("a", &[S, L]);
        t.steps[0].completion_tokens = 30;
        t.steps[1].completion_tokens = 10;
        assert_eq!(large_token_ratio(&t).unwrap(), 0.25);

        let mut empty = trajectory("a", &[S]);
        empty.steps[0].completion_tokens = 0;
        assert!(matches!(
            large_token_ratio(&empty),
            Err(MetricError::Undefined { .. })
        ));
    }

    #[test]
    fn pooled_token_ratio_is_token_weighted() {
        let a = trajectory_with("a", &[L, L], 10, 1.0); // ratio 1.0, 20 tokens
        let b = trajectory_with("b", &[S, S, S, S, S, S], 10, 1.0); // ratio 0.0, 60 tokens
        let pooled = large_token_ratio_pooled(&[a.clone(), b.clone()]).unwrap();
        let weighted = (1.0 * 20.0 + 0.0 * 60.0) / 80.0;
        assert_eq!(pooled, weighted);
    }

    #[test]
    fn per_step_tps_and_staircase() {
        let mut t = trajectory("a", &[S]);
        t.steps[0].completion_tokens = 50;
        t.steps[0].latency_seconds = 2.0;
        let series = per_step_tps(&t);
        assert_eq!(series.tps, vec![Some(25.0)]);

        let constant = trajectory_with("b", &[S, S, S, S, S], 10, 1.0);
        let series = per_step_tps(&constant);
        assert_eq!(series.tps, vec![Some(10.0); 5]);
        assert_eq!(series.cumulative_latency, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn staircase_matches_independent_prefix_sums() {
        let latencies = [0.5, 2.0, 1.25, 4.0, 0.25];
        let mut t = trajectory("a", &[S, L, L, S, S]);
        for (step, &l) in t.steps.iter_mut().zip(&latencies) {
            step.latency_seconds = l;
        }
        let series = per_step_tps(&t);
        let mut expected = Vec::new();
        let mut acc = 0.0;
        for l in latencies {
            acc += l;
            expected.push(acc);
        }
        assert_eq!(series.cumulative_latency, expected);
    }

    #[test]
    fn zero_latency_step_is_flagged_not_fatal() {
        let mut t = trajectory("a", &[S, S]);
        t.steps[1].latency_seconds = 0.0;
        let series = per_step_tps(&t);
        assert!(series.tps[0].is_some());
        assert_eq!(series.tps[1], None);
    }

    #[test]
    fn pareto_flags_table_rows() {
        // Three policy rows that trade speed against quality: none dominated.
        let points = [(1.0, 34.6), (1.54, 18.3), (1.36, 33.9)];
        assert_eq!(pareto_flags(&points), vec![false, false, false]);
    }

    #[test]
    fn pareto_duplicates_do_not_flag_each_other() {
        let points = [(1.5, 20.0), (1.5, 20.0)];
        assert_eq!(pareto_flags(&points), vec![false, false]);
    }

    #[test]
    fn pareto_strict_dominance_flags_the_worse_point() {
        let labeled = vec![
            ("slow".to_string(), 1.0, 10.0),
            ("fast".to_string(), 2.0, 20.0),
        ];
        let points = pareto_points(&labeled);
        assert_eq!(points[0].label, "slow");
        assert!(points[0].dominated);
        assert!(!points[1].dominated);
    }

    #[test]
    fn spearman_detects_monotone_series() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman_rho(&xs, &[10.0, 20.0, 30.0, 40.0]).unwrap(), 1.0);
        assert_eq!(spearman_rho(&xs, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(matches!(
            spearman_rho(&xs, &[5.0, 5.0, 5.0, 5.0]),
            Err(MetricError::Undefined { .. })
        ));
    }

    fn sample_summary() -> MetricSummary {
        MetricSummary {
            policy: "escalation_linear".to_string(),
            n_trajectories: 1000,
            success_rate: 0.905,
            mean_steps: 21.372,
            total_latency_seconds: 48123.5,
            speedup_vs_baseline: 1.3607142857142858,
            switching_ratio: 0.1234,
            large_token_ratio: 0.4567,
            per_step_tps: vec![12.8, 51.2, 25.6],
        }
    }

    #[test]
    fn report_round_trips_in_both_formats() {
        let summaries = vec![sample_summary(), {
            let mut other = sample_summary();
            other.policy = "always_small".to_string();
            other.per_step_tps = Vec::new();
            other
        }];
        for format in [ReportFormat::Csv, ReportFormat::Jsonl] {
            let mut buffer = Vec::new();
            write_report(&mut buffer, &summaries, format).unwrap();
            let read = read_report(std::io::Cursor::new(buffer), format).unwrap();
            assert_eq!(read, summaries);
        }
    }

    #[test]
    fn empty_report_is_a_header_only_csv() {
        let mut buffer = Vec::new();
        write_report(&mut buffer, &[], ReportFormat::Csv).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n"));
        let read = read_report(std::io::Cursor::new(text.into_bytes()), ReportFormat::Csv).unwrap();
        assert!(read.is_empty());
    }

    #[test]
    fn csv_prints_ratios_with_four_decimals() {
        let mut buffer = Vec::new();
        write_report(&mut buffer, &[sample_summary()], ReportFormat::Csv).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert!(row.contains(",0.9050,"), "row was: {row}");
        assert!(row.contains(",0.1234,"));
        assert!(row.contains(",0.4567,"));
    }

    #[test]
    fn summarize_builds_consistent_rows() {
        let trajectories = vec![
            trajectory_with("a", &[L, L, S, S], 10, 2.0),
            trajectory_with("b", &[S, S], 10, 2.0),
        ];
        let summary = summarize("mixed", &trajectories, 24.0).unwrap();
        assert_eq!(summary.n_trajectories, 2);
        assert_eq!(summary.success_rate, 1.0);
        assert_eq!(summary.mean_steps, 3.0);
        assert_eq!(summary.total_latency_seconds, 12.0);
        assert_eq!(summary.speedup_vs_baseline, 2.0);
        assert_eq!(summary.switching_ratio, 0.25);
        assert_eq!(summary.large_token_ratio, quantize_ratio(1.0 / 3.0));
    }

    #[test]
    fn metrics_from_log_file_match_in_memory_values() {
        let trajectories = vec![
            trajectory_with("a", &[S, L, L, S], 12, 1.5),
            trajectory_with("b", &[S, S, L], 7, 0.5),
        ];
        let mut buffer = Vec::new();
        for t in &trajectories {
            crate::trajectory::write_jsonl(&mut buffer, t, "hash").unwrap();
        }
        let reloaded = crate::trajectory::read_jsonl(std::io::Cursor::new(buffer)).unwrap();

        assert_eq!(
            switching_ratio(&reloaded).unwrap(),
            switching_ratio(&trajectories).unwrap()
        );
        assert_eq!(
            large_token_ratio_pooled(&reloaded).unwrap(),
            large_token_ratio_pooled(&trajectories).unwrap()
        );
        assert_eq!(per_step_tps(&reloaded[0]), per_step_tps(&trajectories[0]));
    }

    #[test]
    fn xy_series_writer_emits_two_columns() {
        let mut buffer = Vec::new();
        write_xy_series(&mut buffer, ("step", "latency"), &[(1.0, 0.5), (2.0, 1.5)]).unwrap();
        assert_eq!(
            String::from_utf8(buffer).unwrap(),
            "step,latency\n1,0.5\n2,1.5\n"
        );
    }
}
