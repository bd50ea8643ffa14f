//! Scenario configuration documents.
//!
//! ```json
//! {
//!   "n": 4, "t": 1, "k": 2, "m": 2, "ell": 64,
//!   "schedule": { "policy": "random", "seed": 7, "fairness": 200 },
//!   "adversary": { "nodes": [{ "id": 3, "strategy": "silent" }], "client_crashes": { "1": 150 } },
//!   "workload": { "mix": 0.5, "ops": 10 }
//! }
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use super::engine::ActionKey;
use super::workload::{workload_generate, OpSpec, WorkloadError};
use crate::fault::AdversarySpec;
use crate::types::{ConfigError, SystemConfig, DIGEST_BITS};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("field `{field}`: {reason}")]
    Field { field: String, reason: String },
    #[error("field `workload`: {0}")]
    Workload(#[from] WorkloadError),
}

fn field_err(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Field { field: field.into(), reason: reason.into() }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Random,
    Exhaustive,
    Scripted,
}

pub const DEFAULT_FAIRNESS: u64 = 200;
pub const DEFAULT_DRAIN_PROBABILITY: f64 = 0.05;
pub const DEFAULT_MAX_STEPS: u64 = 2_000_000;
pub const DEFAULT_EXHAUSTIVE_DEPTH: usize = 14;

/// Limits on exhaustive exploration, to keep it tractable.
pub const EXHAUSTIVE_MAX_NODES: usize = 4;
pub const EXHAUSTIVE_MAX_DEPTH: usize = 14;
pub const EXHAUSTIVE_MAX_OPS_PER_CLIENT: usize = 3;

fn default_fairness() -> u64 {
    DEFAULT_FAIRNESS
}

fn default_drain() -> f64 {
    DEFAULT_DRAIN_PROBABILITY
}

fn default_max_steps() -> u64 {
    DEFAULT_MAX_STEPS
}

fn default_depth() -> usize {
    DEFAULT_EXHAUSTIVE_DEPTH
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub seed: u64,
    /// Every enabled event is taken within this many steps of becoming
    /// enabled.
    #[serde(default = "default_fairness")]
    pub fairness: u64,
    /// Per-step chance that the scheduler holds back new invocations until
    /// the system quiesces.
    #[serde(default = "default_drain")]
    pub drain_probability: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    /// Branching depth for exhaustive exploration.
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Forced prefix of scheduler choices for the scripted policy.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<ActionKey>,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            policy: Policy::Random,
            seed: 0,
            fairness: DEFAULT_FAIRNESS,
            drain_probability: DEFAULT_DRAIN_PROBABILITY,
            max_steps: DEFAULT_MAX_STEPS,
            depth: DEFAULT_EXHAUSTIVE_DEPTH,
            script: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    /// Fraction of reads.
    #[serde(default)]
    pub mix: f64,
    /// Operations per client.
    #[serde(default)]
    pub ops: usize,
    /// Explicit per-client scripts; overrides `mix` and `ops` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scripts: Option<Vec<Vec<OpSpec>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub m: usize,
    pub ell: usize,
    #[serde(default = "default_lambda")]
    pub lambda: usize,
    /// Skip the `n >= 2t + k` check, for resilience-boundary experiments.
    #[serde(default)]
    pub allow_unsafe: bool,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub workload: Workload,
}

fn default_lambda() -> usize {
    DIGEST_BITS
}

impl Scenario {
    pub fn new(config: SystemConfig) -> Self {
        Scenario {
            n: config.n,
            t: config.t,
            k: config.k,
            m: config.m,
            ell: config.ell,
            lambda: config.lambda,
            allow_unsafe: false,
            schedule: Schedule::default(),
            adversary: AdversarySpec::default(),
            workload: Workload::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn config(&self) -> SystemConfig {
        SystemConfig { n: self.n, t: self.t, k: self.k, m: self.m, ell: self.ell, lambda: self.lambda }
    }

    /// Same scenario with the scheduler and adversary reseeded.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.schedule.seed = seed;
        s.adversary.seed = seed;
        s
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let config = self.config();
        if self.allow_unsafe {
            config.validate_shape()?;
        } else {
            config.validate()?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, b) in self.adversary.nodes.iter().enumerate() {
            if b.id >= self.n {
                return Err(field_err(format!("adversary.nodes[{i}].id"), format!("node {} >= n", b.id)));
            }
            if !seen.insert(b.id) {
                return Err(field_err(format!("adversary.nodes[{i}].id"), "duplicate node"));
            }
        }
        if seen.len() > self.t {
            return Err(field_err("adversary.nodes", format!("{} faulty nodes exceed t = {}", seen.len(), self.t)));
        }
        for &c in self.adversary.client_crashes.keys() {
            if c as usize >= self.m {
                return Err(field_err("adversary.client_crashes", format!("client {c} >= m")));
            }
        }
        if self.schedule.fairness == 0 {
            return Err(field_err("schedule.fairness", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.schedule.drain_probability) {
            return Err(field_err("schedule.drain_probability", "outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.workload.mix) {
            return Err(field_err("workload.mix", "outside [0, 1]"));
        }
        if self.schedule.policy == Policy::Exhaustive {
            if self.n > EXHAUSTIVE_MAX_NODES {
                return Err(field_err("n", format!("exhaustive exploration needs n <= {EXHAUSTIVE_MAX_NODES}")));
            }
            if self.schedule.depth > EXHAUSTIVE_MAX_DEPTH {
                return Err(field_err("schedule.depth", format!("at most {EXHAUSTIVE_MAX_DEPTH}")));
            }
            let ops = match &self.workload.scripts {
                Some(s) => s.iter().map(Vec::len).max().unwrap_or(0),
                None => self.workload.ops,
            };
            if ops > EXHAUSTIVE_MAX_OPS_PER_CLIENT {
                return Err(field_err(
                    "workload",
                    format!("exhaustive exploration allows at most {EXHAUSTIVE_MAX_OPS_PER_CLIENT} ops per client"),
                ));
            }
        }
        if let Some(scripts) = &self.workload.scripts {
            if scripts.len() != self.m {
                return Err(field_err("workload.scripts", format!("{} scripts for m = {}", scripts.len(), self.m)));
            }
            let mut values = std::collections::BTreeSet::new();
            for (c, script) in scripts.iter().enumerate() {
                for (i, op) in script.iter().enumerate() {
                    if let OpSpec::Write(v) = op {
                        if v.len() != self.ell {
                            return Err(field_err(format!("workload.scripts[{c}][{i}]"), "value length != ell"));
                        }
                        if !values.insert(v.clone()) {
                            return Err(field_err(format!("workload.scripts[{c}][{i}]"), "value written twice"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Client scripts: the explicit ones, or generated from the workload mix
    /// and the schedule seed.
    pub fn scripts(&self) -> Result<Vec<Vec<OpSpec>>, ScenarioError> {
        match &self.workload.scripts {
            Some(s) => Ok(s.clone()),
            None => Ok(workload_generate(self.workload.mix, self.workload.ops, self.ell, self.m, self.schedule.seed)?),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }
}
