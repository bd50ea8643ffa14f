//! Bounded exhaustive exploration of scheduler choices.
//!
//! Every ordering of the first `depth` actions is tried; each resulting
//! prefix is then completed with the deterministic first-enabled policy.
//! States reached with an identical history are explored once.

use std::collections::HashMap;

use super::engine::{ActionKey, RunResult, SimError, Simulation};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExploreReport {
    /// Completed executions handed to the checker.
    pub executions: usize,
    /// Distinct states expanded within the branching depth.
    pub states: usize,
    /// Failing executions: the scheduler prefix and the checker's message.
    pub failures: Vec<(Vec<ActionKey>, String)>,
}

/// Explores all schedules of `sim` up to `depth` branching steps and runs
/// `check` on every completed execution.
pub fn explore<F>(sim: Simulation, depth: usize, max_steps: u64, check: F) -> Result<ExploreReport, SimError>
where
    F: FnMut(&RunResult) -> Result<(), String>,
{
    search(sim, depth, max_steps, true, check)
}

/// Like [`explore`] but without merging repeated states; exponentially
/// slower, useful only to cross-check the state merging.
pub fn explore_naive<F>(sim: Simulation, depth: usize, max_steps: u64, check: F) -> Result<ExploreReport, SimError>
where
    F: FnMut(&RunResult) -> Result<(), String>,
{
    search(sim, depth, max_steps, false, check)
}

fn search<F>(sim: Simulation, depth: usize, max_steps: u64, dedupe: bool, mut check: F) -> Result<ExploreReport, SimError>
where
    F: FnMut(&RunResult) -> Result<(), String>,
{
    let mut report = ExploreReport::default();
    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    let mut stack: Vec<(Simulation, Vec<ActionKey>)> = vec![(sim, Vec::new())];
    while let Some((mut sim, path)) = stack.pop() {
        sim.tick_crashes();
        let enabled = sim.enabled();
        if path.len() >= depth || enabled.is_empty() {
            let result = sim.run_to_completion(max_steps)?;
            report.executions += 1;
            if let Err(msg) = check(&result) {
                report.failures.push((path, msg));
            }
            continue;
        }
        report.states += 1;
        for key in enabled.into_iter().rev() {
            let mut next = sim.clone();
            next.execute(key)?;
            if dedupe {
                let fp = next.fingerprint();
                let d = path.len() + 1;
                match seen.get(&fp) {
                    Some(&prev) if prev <= d => continue,
                    _ => {
                        seen.insert(fp, d);
                    }
                }
            }
            let mut p = path.clone();
            p.push(key);
            stack.push((next, p));
        }
    }
    Ok(report)
}
