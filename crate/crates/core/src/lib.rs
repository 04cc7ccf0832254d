//! Orchestration of a low-cost and a high-capacity language-model tier over
//! multi-turn agent trajectories.
//!
//! The small tier runs routine Think–Act–Observe steps; after every step the
//! active model judges its own progress through a structured PROGRESS block.
//! Stagnation signals escalate control to the large tier for a bounded number
//! of steps, with the bound growing under repeated stagnation according to a
//! configurable budget schedule. The crate also ships a deterministic
//! synthetic-world simulator and a metrics pipeline (switching ratio,
//! speedup, token ratios, Pareto flags) so escalation policies can be
//! compared without any live model.
//!
//! Module map:
//!
//! * [`escalation`] — escalation-level recursion and budget schedules.
//! * [`progress`] — the PROGRESS block wire format: render, parse, emit.
//! * [`controller`] — the warm-up/collaborative/finalization state machine.
//! * [`backend`] — completion backends (scripted, HTTP) and tool dispatch.
//! * [`sim`] — seeded synthetic worlds and policy experiments.
//! * [`metrics`] — trajectory metrics and report exporters.
//! * [`trajectory`] — step records, trajectories, and the JSONL log schema.

pub mod backend;
pub mod controller;
pub mod escalation;
pub mod metrics;
pub mod progress;
pub mod sim;
pub mod trajectory;
