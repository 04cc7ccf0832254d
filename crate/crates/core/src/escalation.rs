//! Escalation-level arithmetic and intervention-budget schedules.
//!
//! The escalation level counts consecutive stagnation signals and resets to
//! zero the moment the agent reports progress. A [`BudgetSchedule`] maps the
//! level to the number of consecutive strong-tier steps granted at an
//! escalation: a fixed budget, a capped linear ramp, or a saturating sigmoid
//! profile. Everything here is a pure function over plain values and is safe
//! to call from any number of workers.

use serde::{Deserialize, Serialize};

/// Count of consecutive stagnation (FALSE) signals in the trajectory so far.
///
/// Folding [`update_level`] over a progress sequence keeps the level equal to
/// the length of the maximal trailing run of FALSE values.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EscalationLevel(pub u32);

impl EscalationLevel {
    pub const ZERO: Self = Self(0);

    pub fn get(self) -> u32 {
        self.0
    }
}

impl std::fmt::Display for EscalationLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Maps the base budget and the current escalation level to an intervention
/// horizon (a step count).
///
/// * `Static` grants the base budget regardless of level.
/// * `LinearBounded` grows by `growth` steps per level, capped at `cap`.
///   With `growth = 0` it is equivalent to `Static`.
/// * `Sigmoid` ramps from `base` toward `cap` with rate `rate`, centered on
///   `midpoint`; it saturates instead of growing without bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BudgetSchedule {
    Static {
        base: u32,
    },
    LinearBounded {
        base: u32,
        growth: u32,
        cap: u32,
    },
    Sigmoid {
        base: u32,
        cap: u32,
        rate: f64,
        midpoint: f64,
    },
}

/// Default budget cap when a configuration leaves it unspecified.
pub const DEFAULT_BUDGET_CAP: u32 = 8;
/// Default sigmoid growth rate.
pub const DEFAULT_SIGMOID_RATE: f64 = 1.0;
/// Default sigmoid midpoint (level at which half the ramp is granted).
pub const DEFAULT_SIGMOID_MIDPOINT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("base budget must be at least 1")]
    ZeroBase,
    #[error("budget cap {cap} is below the base budget {base}")]
    CapBelowBase { base: u32, cap: u32 },
    #[error("sigmoid schedule requires base < cap, got base {base}, cap {cap}")]
    BaseNotBelowCap { base: u32, cap: u32 },
    #[error("sigmoid rate must be a finite positive number, got {0}")]
    InvalidRate(f64),
    #[error("sigmoid midpoint must be finite and non-negative, got {0}")]
    InvalidMidpoint(f64),
}

impl BudgetSchedule {
    /// Checks the schedule invariants. All budget arithmetic assumes a
    /// validated schedule.
    pub fn validate(&self) -> Result<(), ScheduleError> {
        match *self {
            BudgetSchedule::Static { base } => {
                if base == 0 {
                    return Err(ScheduleError::ZeroBase);
                }
            }
            BudgetSchedule::LinearBounded { base, cap, .. } => {
                if base == 0 {
                    return Err(ScheduleError::ZeroBase);
                }
                if cap < base {
                    return Err(ScheduleError::CapBelowBase { base, cap });
                }
            }
            BudgetSchedule::Sigmoid {
                base,
                cap,
                rate,
                midpoint,
            } => {
                if base == 0 {
                    return Err(ScheduleError::ZeroBase);
                }
                if cap <= base {
                    return Err(ScheduleError::BaseNotBelowCap { base, cap });
                }
                if !(rate.is_finite() && rate > 0.0) {
                    return Err(ScheduleError::InvalidRate(rate));
                }
                if !(midpoint.is_finite() && midpoint >= 0.0) {
                    return Err(ScheduleError::InvalidMidpoint(midpoint));
                }
            }
        }
        Ok(())
    }

    /// Largest budget this schedule can ever grant.
    pub fn max_budget(&self) -> u32 {
        match *self {
            BudgetSchedule::Static { base } => base,
            BudgetSchedule::LinearBounded { cap, .. } => cap,
            BudgetSchedule::Sigmoid { cap, .. } => cap,
        }
    }

    /// Budget granted at level 0 before any growth.
    pub fn base(&self) -> u32 {
        match *self {
            BudgetSchedule::Static { base }
            | BudgetSchedule::LinearBounded { base, .. }
            | BudgetSchedule::Sigmoid { base, .. } => base,
        }
    }
}

/// One recursion step of the escalation level: stagnation increments the
/// count, progress resets it to zero. Total over all inputs.
pub fn update_level(previous: EscalationLevel, progress: bool) -> EscalationLevel {
    if progress {
        EscalationLevel::ZERO
    } else {
        EscalationLevel(previous.0.saturating_add(1))
    }
}

/// Number of consecutive strong-tier steps granted at `level` under
/// `schedule`. Always in `[1, schedule.max_budget()]` for a valid schedule.
///
/// The sigmoid value is real; the budget is a step count, so the result is
/// rounded up. The pre-rounding value stays strictly below the cap, so the
/// ceiling never exceeds it.
pub fn intervention_budget(schedule: &BudgetSchedule, level: EscalationLevel) -> u32 {
    let l = level.0;
    match *schedule {
        BudgetSchedule::Static { base } => base,
        BudgetSchedule::LinearBounded { base, growth, cap } => {
            let grown = u64::from(base) + u64::from(growth) * u64::from(l);
            grown.min(u64::from(cap)) as u32
        }
        BudgetSchedule::Sigmoid {
            base,
            cap,
            rate,
            midpoint,
        } => {
            let span = f64::from(cap) - f64::from(base);
            let raw = f64::from(base) + span * sigmoid(rate * (f64::from(l) - midpoint));
            (raw.ceil() as u32).clamp(1, cap)
        }
    }
}

/// Logistic function `1 / (1 + e^(-x))`, evaluated in the numerically stable
/// branch for each sign so that `sigmoid(-x) + sigmoid(x)` stays at 1 up to
/// rounding.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn level_increments_on_stagnation() {
        assert_eq!(update_level(EscalationLevel(0), false), EscalationLevel(1));
        assert_eq!(update_level(EscalationLevel(3), false), EscalationLevel(4));
    }

    #[test]
    fn level_resets_on_progress() {
        assert_eq!(update_level(EscalationLevel(5), true), EscalationLevel(0));
        assert_eq!(update_level(EscalationLevel(0), true), EscalationLevel(0));
    }

    #[test]
    fn linear_budget_grows_then_caps() {
        let schedule = BudgetSchedule::LinearBounded {
            base: 2,
            growth: 2,
            cap: 8,
        };
        assert_eq!(intervention_budget(&schedule, EscalationLevel(1)), 4);
        assert_eq!(intervention_budget(&schedule, EscalationLevel(10)), 8);
    }

    #[test]
    fn zero_growth_is_the_static_strategy() {
        let linear = BudgetSchedule::LinearBounded {
            base: 2,
            growth: 0,
            cap: 8,
        };
        let fixed = BudgetSchedule::Static { base: 2 };
        for l in 0..100 {
            let level = EscalationLevel(l);
            assert_eq!(
                intervention_budget(&linear, level),
                intervention_budget(&fixed, level)
            );
            assert_eq!(intervention_budget(&linear, level), 2);
        }
    }

    #[test]
    fn sigmoid_budget_at_midpoint() {
        let schedule = BudgetSchedule::Sigmoid {
            base: 2,
            cap: 8,
            rate: 1.0,
            midpoint: 2.0,
        };
        // sigmoid(0) = 1/2, so the raw value is 2 + 6 * 0.5 = 5 exactly.
        assert_eq!(intervention_budget(&schedule, EscalationLevel(2)), 5);
    }

    #[test]
    fn sigmoid_budget_saturates_at_cap() {
        let schedule = BudgetSchedule::Sigmoid {
            base: 2,
            cap: 8,
            rate: 1.0,
            midpoint: 2.0,
        };
        // At level 20 the raw value is 2 + 6 * sigmoid(18). An interval
        // argument pins the ceiling without trusting f64 exp: sigmoid(18) < 1
        // bounds it below 8, and e^-18 < e^-2 < 1/5 gives sigmoid(18) > 5/6,
        // so the raw value exceeds 7. Hence the ceiling is exactly 8.
        assert!((-18.0f64).exp() < 0.2);
        assert_eq!(intervention_budget(&schedule, EscalationLevel(20)), 8);
    }

    #[test]
    fn sigmoid_symmetry_and_saturation() {
        assert_eq!(sigmoid(0.0), 0.5);
        // Saturation: within 1e-20 of 1 (phrased as the complement, which
        // stays meaningful where 1.0 - 1e-20 itself collapses to 1.0).
        assert!(1.0 - sigmoid(50.0) < 1e-20);
        assert!((sigmoid(-3.0) + sigmoid(3.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert_eq!(
            BudgetSchedule::Static { base: 0 }.validate(),
            Err(ScheduleError::ZeroBase)
        );
        assert_eq!(
            BudgetSchedule::LinearBounded {
                base: 9,
                growth: 2,
                cap: 8
            }
            .validate(),
            Err(ScheduleError::CapBelowBase { base: 9, cap: 8 })
        );
        assert_eq!(
            BudgetSchedule::Sigmoid {
                base: 8,
                cap: 8,
                rate: 1.0,
                midpoint: 2.0
            }
            .validate(),
            Err(ScheduleError::BaseNotBelowCap { base: 8, cap: 8 })
        );
        assert!(matches!(
            BudgetSchedule::Sigmoid {
                base: 2,
                cap: 8,
                rate: 0.0,
                midpoint: 2.0
            }
            .validate(),
            Err(ScheduleError::InvalidRate(_))
        ));
        assert!(BudgetSchedule::LinearBounded {
            base: 2,
            growth: 2,
            cap: 8
        }
        .validate()
        .is_ok());
    }

    /// Reference for the level recursion: length of the trailing FALSE run.
    fn trailing_false_run(values: &[bool]) -> u32 {
        values.iter().rev().take_while(|v| !**v).count() as u32
    }

    proptest! {
        #[test]
        fn folded_level_equals_trailing_false_run(values in prop::collection::vec(any::<bool>(), 0..64)) {
            let folded = values
                .iter()
                .fold(EscalationLevel::ZERO, |l, &v| update_level(l, v));
            prop_assert_eq!(folded.0, trailing_false_run(&values));
        }

        #[test]
        fn budget_is_monotone_and_bounded(
            base in 1u32..12,
            extra in 0u32..12,
            growth in 0u32..5,
            rate in 0.1f64..4.0,
            midpoint in 0.0f64..6.0,
            level in 0u32..80,
        ) {
            let cap = base + extra;
            let schedules = [
                BudgetSchedule::LinearBounded { base, growth, cap },
                BudgetSchedule::Sigmoid { base, cap: cap + 1, rate, midpoint },
            ];
            for schedule in &schedules {
                prop_assert!(schedule.validate().is_ok());
                let here = intervention_budget(schedule, EscalationLevel(level));
                let next = intervention_budget(schedule, EscalationLevel(level + 1));
                prop_assert!(here <= next, "budget must not shrink as the level grows");
                prop_assert!(here >= 1);
                prop_assert!(here <= schedule.max_budget());
            }
        }

        #[test]
        fn sigmoid_raw_value_stays_inside_the_open_interval(
            base in 1u32..12,
            extra in 1u32..12,
            rate in 0.1f64..4.0,
            midpoint in 0.0f64..6.0,
            level in 0u32..80,
        ) {
            // Bounded domain: past it the raw value rounds onto the cap in
            // f64 even though the mathematical value stays strictly below.
            prop_assume!(rate * (f64::from(level) - midpoint) <= 30.0);
            let cap = base + extra;
            let span = f64::from(cap) - f64::from(base);
            let raw = f64::from(base) + span * sigmoid(rate * (f64::from(level) - midpoint));
            prop_assert!(raw > f64::from(base));
            prop_assert!(raw < f64::from(cap));
        }

        #[test]
        fn linear_budget_at_level_zero_is_the_base(base in 1u32..20, extra in 0u32..20, growth in 0u32..6) {
            let schedule = BudgetSchedule::LinearBounded { base, growth, cap: base + extra };
            prop_assert_eq!(intervention_budget(&schedule, EscalationLevel::ZERO), base);
        }
    }
}
