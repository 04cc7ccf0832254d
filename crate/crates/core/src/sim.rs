//! Deterministic synthetic worlds for comparing escalation policies without
//! any live model.
//!
//! A world is an ordered list of segments; each segment takes a number of
//! progress units to clear, and each tier clears a unit per step with a
//! segment-specific probability. Difficulty is expressed purely through the
//! gap between the two probabilities. Per-step latency and token counts are
//! the tier's declared values, so latency arithmetic in tests is exact.
//!
//! Every trajectory is fully determined by (world, policy, seed): each step
//! index owns its own derived random stream, split by purpose (tier choice,
//! progress draw, noise), so adding or removing instrumentation never
//! perturbs the draws, and policies that skip a draw do not shift the
//! others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{step_transition, EscalationState};
use crate::escalation::{update_level, BudgetSchedule, EscalationLevel};
use crate::metrics::{summarize, MetricError, MetricSummary};
use crate::progress::ProgressAssessment;
use crate::trajectory::{Phase, StepAction, StepRecord, Termination, Tier, TierRank, Trajectory};

fn default_tokens_small() -> u64 {
    64
}

fn default_tokens_large() -> u64 {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Progress units needed to clear this segment.
    pub length: u32,
    /// Probability that a small-tier step makes progress here.
    pub p_small: f64,
    /// Probability that a large-tier step makes progress here.
    pub p_large: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub segments: Vec<Segment>,
    /// Seconds per small-tier step.
    pub latency_small: f64,
    /// Seconds per large-tier step. Must exceed `latency_small`, otherwise
    /// the trade-off is degenerate.
    pub latency_large: f64,
    /// Completion tokens declared per small-tier step.
    #[serde(default = "default_tokens_small")]
    pub tokens_small: u64,
    /// Completion tokens declared per large-tier step.
    #[serde(default = "default_tokens_large")]
    pub tokens_large: u64,
}

impl WorldModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.segments.is_empty() {
            return Err(SimError::InvalidWorld("world needs at least one segment".into()));
        }
        for (i, segment) in self.segments.iter().enumerate() {
            if segment.length == 0 {
                return Err(SimError::InvalidWorld(format!(
                    "segment {i} has zero length"
                )));
            }
            let ok = segment.p_small.is_finite()
                && segment.p_large.is_finite()
                && (0.0..=1.0).contains(&segment.p_small)
                && (0.0..=1.0).contains(&segment.p_large)
                && segment.p_small <= segment.p_large;
            if !ok {
                return Err(SimError::InvalidWorld(format!(
                    "segment {i} needs 0 <= p_small <= p_large <= 1, got p_small={}, p_large={}",
                    segment.p_small, segment.p_large
                )));
            }
        }
        if !(self.latency_small.is_finite() && self.latency_small > 0.0) {
            return Err(SimError::InvalidWorld("latency_small must be positive".into()));
        }
        if !(self.latency_large.is_finite() && self.latency_large > self.latency_small) {
            return Err(SimError::InvalidWorld(
                "latency_large must exceed latency_small".into(),
            ));
        }
        if self.tokens_small == 0 || self.tokens_large == 0 {
            return Err(SimError::InvalidWorld(
                "per-step token counts must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let world: WorldModel = read_json(path)?;
        world.validate()?;
        Ok(world)
    }

    /// Total progress units across all segments.
    pub fn total_units(&self) -> u64 {
        self.segments.iter().map(|s| u64::from(s.length)).sum()
    }
}

/// Loads a JSON array of worlds (e.g. a difficulty sweep fixture).
pub fn load_worlds(path: impl AsRef<std::path::Path>) -> Result<Vec<WorldModel>, SimError> {
    let path = path.as_ref();
    let worlds: Vec<WorldModel> = read_json(path)?;
    for world in &worlds {
        world.validate()?;
    }
    Ok(worlds)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, SimError> {
    let data = std::fs::read_to_string(path).map_err(|e| SimError::MalformedWorld {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&data).map_err(|e| SimError::MalformedWorld {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Tier-selection policy under comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    AlwaysSmall,
    AlwaysLarge,
    /// Picks the large tier with probability `p_large` at every step.
    Random { p_large: f64 },
    /// The escalation controller: `warmup` forced large-tier steps, then
    /// self-evaluation-driven switching under `schedule`. Unlike the live
    /// controller, `warmup` may be 0 to skip the planning phase entirely.
    Escalation {
        schedule: BudgetSchedule,
        warmup: u32,
    },
}

impl Policy {
    pub fn validate(&self) -> Result<(), SimError> {
        match self {
            Policy::AlwaysSmall | Policy::AlwaysLarge => Ok(()),
            Policy::Random { p_large } => {
                if p_large.is_finite() && (0.0..=1.0).contains(p_large) {
                    Ok(())
                } else {
                    Err(SimError::InvalidPolicy(format!(
                        "random p_large must be in [0,1], got {p_large}"
                    )))
                }
            }
            Policy::Escalation { schedule, .. } => schedule
                .validate()
                .map_err(|e| SimError::InvalidPolicy(e.to_string())),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Policy::AlwaysSmall => "always_small".to_string(),
            Policy::AlwaysLarge => "always_large".to_string(),
            Policy::Random { p_large } => format!("random_p{p_large}"),
            Policy::Escalation { schedule, warmup } => {
                let schedule_part = match schedule {
                    BudgetSchedule::Static { base } => format!("static_b{base}"),
                    BudgetSchedule::LinearBounded { base, growth, cap } => {
                        format!("linear_b{base}_k{growth}_cap{cap}")
                    }
                    BudgetSchedule::Sigmoid {
                        base,
                        cap,
                        rate,
                        midpoint,
                    } => format!("sigmoid_b{base}_cap{cap}_a{rate}_m{midpoint}"),
                };
                format!("escalation_{schedule_part}_w{warmup}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub max_steps: u32,
    /// Probability that the reported progress value is flipped, modeling an
    /// unreliable self-check. The flip affects what the escalation machinery
    /// sees and what the log records, never the actual segment clearing.
    pub progress_noise: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_steps: 40,
            progress_noise: 0.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("{path}: {message}")]
    MalformedWorld { path: String, message: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

const LANE_TIER: u64 = 0;
const LANE_PROGRESS: u64 = 1;
const LANE_NOISE: u64 = 2;

/// Uniform draw in [0,1) from the (seed, step, purpose) stream.
fn lane_draw(seed: u64, step_index: u32, lane: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(step_index) << 2) | lane);
    rng.gen::<f64>()
}

pub fn simulate_trajectory(
    world: &WorldModel,
    policy: &Policy,
    seed: u64,
    max_steps: u32,
) -> Result<Trajectory, SimError> {
    simulate_trajectory_with(
        world,
        policy,
        seed,
        &SimOptions {
            max_steps,
            ..SimOptions::default()
        },
    )
}

/// Runs one seeded trajectory. Each step the policy picks a tier, a seeded
/// draw against the current segment's per-tier probability decides progress,
/// and the (possibly noise-flipped) reported value feeds the same level and
/// transition machinery as the live controller. The trajectory ends when all
/// segments are cleared or `max_steps` is reached.
pub fn simulate_trajectory_with(
    world: &WorldModel,
    policy: &Policy,
    seed: u64,
    options: &SimOptions,
) -> Result<Trajectory, SimError> {
    world.validate()?;
    policy.validate()?;
    if options.max_steps == 0 {
        return Err(SimError::InvalidOptions("max_steps must be at least 1".into()));
    }
    if !(options.progress_noise.is_finite() && (0.0..=1.0).contains(&options.progress_noise)) {
        return Err(SimError::InvalidOptions(format!(
            "progress_noise must be in [0,1], got {}",
            options.progress_noise
        )));
    }

    let warmup = match policy {
        Policy::Escalation { warmup, .. } => *warmup,
        _ => 0,
    };

    let mut steps: Vec<StepRecord> = Vec::new();
    let mut segment_index = 0usize;
    let mut cleared_units = 0u32;
    let mut level = EscalationLevel::ZERO;
    let mut state: Option<EscalationState> = None;

    for index in 1..=options.max_steps {
        // The world being cleared is the simulator's answer condition; like
        // the live loop condition it is re-checked before every step. (The
        // live warm-up only exits behind a TRUE signal, so under a noisy
        // check this top-of-loop test can end a warm-up one step earlier
        // than the controller would.)
        if segment_index >= world.segments.len() {
            break;
        }

        let in_warmup = index <= warmup && matches!(policy, Policy::Escalation { .. });
        if let Policy::Escalation { schedule, .. } = policy {
            if !in_warmup && state.is_none() {
                state = Some(EscalationState::initial(schedule, level, index - 1));
            }
        }

        let tier = match policy {
            Policy::AlwaysSmall => TierRank::Small,
            Policy::AlwaysLarge => TierRank::Large,
            Policy::Random { p_large } => {
                if lane_draw(seed, index, LANE_TIER) < *p_large {
                    TierRank::Large
                } else {
                    TierRank::Small
                }
            }
            Policy::Escalation { .. } => {
                if in_warmup {
                    TierRank::Large
                } else {
                    state.as_ref().expect("state engaged after warmup").mode
                }
            }
        };

        let segment = &world.segments[segment_index];
        let p = match tier {
            TierRank::Small => segment.p_small,
            TierRank::Large => segment.p_large,
        };
        let actual = lane_draw(seed, index, LANE_PROGRESS) < p;
        let reported = if options.progress_noise > 0.0
            && lane_draw(seed, index, LANE_NOISE) < options.progress_noise
        {
            !actual
        } else {
            actual
        };

        if actual {
            cleared_units += 1;
            if cleared_units >= segment.length {
                segment_index += 1;
                cleared_units = 0;
            }
        }

        match (policy, &mut state) {
            (Policy::Escalation { schedule, .. }, Some(st)) if !in_warmup => {
                if st.mode == TierRank::Large {
                    st.strong_steps_used += 1;
                }
                *st = step_transition(st, reported, schedule);
                st.steps_total += 1;
                level = st.level;
            }
            _ => {
                level = update_level(level, reported);
            }
        }

        let solved = segment_index >= world.segments.len();
        let (label, latency, tokens) = match tier {
            TierRank::Small => ("sim-small", world.latency_small, world.tokens_small),
            TierRank::Large => ("sim-large", world.latency_large, world.tokens_large),
        };
        let rationale = if reported {
            "simulated progress signal"
        } else {
            "simulated stagnation signal"
        };
        steps.push(StepRecord {
            index,
            tier: Tier {
                rank: tier,
                label: label.to_string(),
            },
            phase: if in_warmup {
                Phase::Warmup
            } else {
                Phase::Collaborative
            },
            prompt_tokens: 0,
            completion_tokens: tokens,
            latency_seconds: latency,
            progress: Some(ProgressAssessment {
                rationale: rationale.to_string(),
                value: reported,
            }),
            level_after: level,
            action: if solved {
                StepAction::Answer
            } else {
                StepAction::Think
            },
        });
        if solved {
            break;
        }
    }

    let solved = segment_index >= world.segments.len();
    Ok(Trajectory {
        id: format!("sim-{seed:016x}"),
        steps,
        termination: if solved {
            Termination::AnswerFound
        } else {
            Termination::IterationCapReached
        },
        final_answer: solved.then(|| "all segments cleared".to_string()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub n_trials: u32,
    pub seed: u64,
    pub sim: SimOptions,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derived per-trial seed. Trials share seeds across policies, so policy
/// comparisons are paired: every policy faces the same draw streams.
fn trial_seed(master: u64, trial: u32) -> u64 {
    splitmix64(master ^ splitmix64(u64::from(trial).wrapping_add(1)))
}

pub fn run_experiment(
    world: &WorldModel,
    policies: &[Policy],
    n_trials: u32,
    seed: u64,
) -> Result<Vec<MetricSummary>, SimError> {
    run_experiment_with(
        world,
        policies,
        &ExperimentOptions {
            n_trials,
            seed,
            sim: SimOptions::default(),
        },
    )
}

/// Aggregates per-policy statistics over seeded trials. Speedup is measured
/// against the always-large policy on the same trial seeds, whether or not
/// it is in `policies`. Deterministic in (world, policies, options); trials
/// run in parallel and aggregate in trial order.
pub fn run_experiment_with(
    world: &WorldModel,
    policies: &[Policy],
    options: &ExperimentOptions,
) -> Result<Vec<MetricSummary>, SimError> {
    world.validate()?;
    if options.n_trials == 0 {
        return Err(SimError::InvalidOptions("n_trials must be at least 1".into()));
    }
    for policy in policies {
        policy.validate()?;
    }

    let seeds: Vec<u64> = (0..options.n_trials)
        .map(|t| trial_seed(options.seed, t))
        .collect();

    let simulate_all = |policy: &Policy| -> Result<Vec<Trajectory>, SimError> {
        let mut trajectories = seeds
            .par_iter()
            .map(|&s| simulate_trajectory_with(world, policy, s, &options.sim))
            .collect::<Result<Vec<_>, _>>()?;
        for (trial, trajectory) in trajectories.iter_mut().enumerate() {
            trajectory.id = format!("sim-{}-t{trial:05}", policy.label());
        }
        Ok(trajectories)
    };

    let baseline = simulate_all(&Policy::AlwaysLarge)?;
    let baseline_total: f64 = baseline.iter().map(Trajectory::total_latency).sum();

    let mut summaries = Vec::with_capacity(policies.len());
    for policy in policies {
        let trajectories = if *policy == Policy::AlwaysLarge {
            baseline.clone()
        } else {
            simulate_all(policy)?
        };
        summaries.push(summarize(&policy.label(), &trajectories, baseline_total)?);
    }
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_world(length: u32, p_small: f64, p_large: f64) -> WorldModel {
        WorldModel {
            segments: vec![Segment {
                length,
                p_small,
                p_large,
            }],
            latency_small: 1.0,
            latency_large: 5.0,
            tokens_small: 64,
            tokens_large: 256,
        }
    }

    fn linear_escalation(warmup: u32) -> Policy {
        Policy::Escalation {
            schedule: BudgetSchedule::LinearBounded {
                base: 2,
                growth: 2,
                cap: 8,
            },
            warmup,
        }
    }

    #[test]
    fn certain_progress_takes_exactly_length_steps() {
        let world = uniform_world(3, 1.0, 1.0);
        let t = simulate_trajectory(&world, &Policy::AlwaysSmall, 7, 40).unwrap();
        assert_eq!(t.termination, Termination::AnswerFound);
        assert_eq!(t.steps.len(), 3);
        assert_eq!(t.total_latency(), 3.0 * world.latency_small);
        assert_eq!(t.steps.last().unwrap().action, StepAction::Answer);
    }

    #[test]
    fn escalation_alternates_when_only_the_large_tier_progresses() {
        // p_small = 0 and p_large = 1 force the trace: each small step fails
        // and escalates, each large step clears one unit and hands back.
        let world = uniform_world(3, 0.0, 1.0);
        let t = simulate_trajectory(&world, &linear_escalation(0), 123, 40).unwrap();
        let tiers: Vec<TierRank> = t.steps.iter().map(|s| s.tier.rank).collect();
        assert_eq!(
            tiers,
            vec![
                TierRank::Small,
                TierRank::Large,
                TierRank::Small,
                TierRank::Large,
                TierRank::Small,
                TierRank::Large,
            ]
        );
        assert_eq!(t.termination, Termination::AnswerFound);
    }

    #[test]
    fn random_with_zero_probability_is_always_small() {
        let world = uniform_world(6, 0.6, 0.9);
        for seed in 0..25 {
            let random =
                simulate_trajectory(&world, &Policy::Random { p_large: 0.0 }, seed, 40).unwrap();
            let small = simulate_trajectory(&world, &Policy::AlwaysSmall, seed, 40).unwrap();
            assert_eq!(random, small);
        }
    }

    #[test]
    fn trajectories_are_reproducible() {
        let world = uniform_world(8, 0.5, 0.8);
        for policy in [
            Policy::AlwaysSmall,
            Policy::Random { p_large: 0.5 },
            linear_escalation(2),
        ] {
            let a = simulate_trajectory(&world, &policy, 99, 40).unwrap();
            let b = simulate_trajectory(&world, &policy, 99, 40).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn noise_flips_reported_values_but_not_clearing() {
        let world = uniform_world(3, 1.0, 1.0);
        let options = SimOptions {
            max_steps: 40,
            progress_noise: 1.0,
        };
        let t = simulate_trajectory_with(&world, &Policy::AlwaysSmall, 5, &options).unwrap();
        // Every step actually progressed (p = 1) yet every report is flipped.
        assert_eq!(t.termination, Termination::AnswerFound);
        assert_eq!(t.steps.len(), 3);
        assert!(t.steps.iter().all(|s| !s.progress.as_ref().unwrap().value));
        let levels: Vec<u32> = t.steps.iter().map(|s| s.level_after.get()).collect();
        assert_eq!(levels, vec![1, 2, 3]);
    }

    #[test]
    fn warmup_steps_run_on_the_large_tier() {
        let world = uniform_world(10, 0.3, 0.9);
        let t = simulate_trajectory(&world, &linear_escalation(3), 42, 40).unwrap();
        let warmup: Vec<_> = t.steps.iter().filter(|s| s.phase == Phase::Warmup).collect();
        assert!(warmup.len() <= 3);
        assert!(warmup.iter().all(|s| s.tier.rank == TierRank::Large));
    }

    #[test]
    fn self_speedup_is_exactly_one() {
        let world = uniform_world(4, 0.5, 0.9);
        let summaries =
            run_experiment(&world, &[Policy::AlwaysLarge], 50, 11).unwrap();
        assert_eq!(summaries[0].speedup_vs_baseline, 1.0);
    }

    #[test]
    fn certain_world_gives_the_exact_latency_ratio() {
        // Both tiers always progress, so step counts match and the speedup
        // reduces to the per-step latency ratio.
        let world = uniform_world(5, 1.0, 1.0);
        let summaries =
            run_experiment(&world, &[Policy::AlwaysSmall], 20, 3).unwrap();
        assert_eq!(
            summaries[0].speedup_vs_baseline,
            world.latency_large / world.latency_small
        );
    }

    #[test]
    fn experiments_are_deterministic() {
        let world = uniform_world(6, 0.4, 0.8);
        let policies = [
            Policy::AlwaysSmall,
            Policy::Random { p_large: 0.5 },
            linear_escalation(2),
        ];
        let a = run_experiment(&world, &policies, 100, 17).unwrap();
        let b = run_experiment(&world, &policies, 100, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stronger_tier_dominates_success_rate() {
        let world = WorldModel {
            segments: vec![
                Segment {
                    length: 5,
                    p_small: 0.5,
                    p_large: 0.9,
                },
                Segment {
                    length: 3,
                    p_small: 0.2,
                    p_large: 0.7,
                },
            ],
            latency_small: 1.0,
            latency_large: 4.0,
            tokens_small: 64,
            tokens_large: 256,
        };
        let summaries = run_experiment(
            &world,
            &[Policy::AlwaysSmall, Policy::AlwaysLarge],
            600,
            29,
        )
        .unwrap();
        let small = &summaries[0];
        let large = &summaries[1];
        let n = small.n_trajectories as f64;
        let se = |p: f64| (p * (1.0 - p) / n).sqrt();
        let slack =
            3.0 * (se(small.success_rate).powi(2) + se(large.success_rate).powi(2)).sqrt();
        assert!(
            large.success_rate >= small.success_rate - slack,
            "always-large success {} fell more than 3 standard errors below always-small {}",
            large.success_rate,
            small.success_rate
        );
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let mut world = uniform_world(3, 0.5, 0.9);
        world.latency_large = 0.5;
        assert!(matches!(
            world.validate(),
            Err(SimError::InvalidWorld(_))
        ));

        let world = uniform_world(3, 0.9, 0.5);
        assert!(matches!(world.validate(), Err(SimError::InvalidWorld(_))));

        assert!(matches!(
            Policy::Random { p_large: 1.5 }.validate(),
            Err(SimError::InvalidPolicy(_))
        ));

        let good = uniform_world(3, 0.5, 0.9);
        assert!(matches!(
            simulate_trajectory(&good, &Policy::AlwaysSmall, 1, 0),
            Err(SimError::InvalidOptions(_))
        ));
    }
}
