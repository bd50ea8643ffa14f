//! Deterministic simulation harness.

pub mod engine;
pub mod exhaustive;
pub mod scenario;
pub mod trace;
pub mod workload;

pub use engine::{run, run_random, ActionKey, RunResult, SimError, Simulation};
pub use exhaustive::{explore, explore_naive, ExploreReport};
pub use scenario::{Policy, Scenario, ScenarioError, Schedule, Workload};
pub use trace::{Component, EventKind, Payload, TraceEvent};
pub use workload::{workload_generate, OpSpec};
