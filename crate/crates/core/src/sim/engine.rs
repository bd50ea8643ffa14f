//! Deterministic discrete-event execution of clients, data nodes and the
//! directory over FIFO channels.
//!
//! One scheduler step performs exactly one action: a client invocation, or
//! the delivery of the oldest message on one channel. Delivering a request
//! to the directory is its atomicity point; the reply travels back on its
//! own channel, so the adversary controls the delay on both sides.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::scenario::{Policy, Scenario, ScenarioError};
use super::trace::{
    Call, Component, EventKind, NodeUsage, Payload, Ret, RunSummary, StarvedClient, TraceEvent,
};
use super::workload::OpSpec;
use crate::client::{Action, Client, ClientError, Completion, ProtocolContext, Step};
use crate::directory::{Directory, SnapshotDirectory};
use crate::fault::{honest_node, wrap_node, AdversarySpec, SimNode};
use crate::messages::{Body, DirRequest, DirResponse, Envelope, NodeRequest, OpId};
use crate::node::DataNode;
use crate::types::{ClientId, Pointer};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("scripted action {index} ({key:?}) is not enabled")]
    ScriptStuck { index: usize, key: ActionKey },
    #[error("action {0:?} is not enabled")]
    NotEnabled(ActionKey),
    #[error("exhaustive policy must be run through the explorer")]
    ExhaustivePolicy,
}

/// One schedulable event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKey {
    Invoke(ClientId),
    Deliver { src: Component, dst: Component },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct ClientSlot {
    client: Client,
    script: Vec<OpSpec>,
    next: usize,
    current: Option<(OpId, bool)>,
    crash_at: Option<u64>,
    crashed: bool,
}

impl ClientSlot {
    fn live(&self) -> bool {
        !self.crashed
    }
}

/// Result of one complete run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub trace: Vec<TraceEvent>,
    pub summary: RunSummary,
    pub steps: u64,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    ctx: Arc<ProtocolContext>,
    slots: Vec<ClientSlot>,
    nodes: Vec<SimNode>,
    dir: SnapshotDirectory,
    channels: BTreeMap<(Component, Component), VecDeque<Envelope>>,
    step: u64,
    trace: Vec<TraceEvent>,
    reads_in_flight: BTreeMap<ClientId, Pointer>,
    violations: Vec<String>,
    was_quiescent: bool,
    history_hash: u64,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let config = scenario.config();
        let ctx = if scenario.allow_unsafe {
            ProtocolContext::new_unchecked(config)?
        } else {
            ProtocolContext::new(config)?
        };
        Ok(Self::from_parts(Arc::new(ctx), scenario.adversary.clone(), scenario.scripts()?, scenario.schedule.seed))
    }

    pub fn from_parts(
        ctx: Arc<ProtocolContext>,
        adversary: AdversarySpec,
        scripts: Vec<Vec<OpSpec>>,
        seed: u64,
    ) -> Self {
        let config = ctx.config;
        let nodes = (0..config.n)
            .map(|i| match adversary.strategy_of(i) {
                Some(s) => wrap_node(i, DataNode::new(), s, adversary.seed),
                None => honest_node(i),
            })
            .collect();
        let slots = scripts
            .into_iter()
            .enumerate()
            .map(|(c, script)| ClientSlot {
                client: Client::new(c as ClientId, &config),
                script,
                next: 0,
                current: None,
                crash_at: adversary.client_crashes.get(&(c as ClientId)).copied(),
                crashed: false,
            })
            .collect();
        let mut sim = Simulation {
            ctx,
            slots,
            nodes,
            dir: SnapshotDirectory::new(config.n, config.m),
            channels: BTreeMap::new(),
            step: 0,
            trace: Vec::new(),
            reads_in_flight: BTreeMap::new(),
            violations: Vec::new(),
            was_quiescent: false,
            history_hash: 0,
        };
        sim.record(
            EventKind::Begin,
            Component::Harness,
            Component::Harness,
            Payload::Begin { config, adversary, seed },
        );
        sim.tick_crashes();
        sim.note_quiescence();
        sim
    }

    pub fn context(&self) -> &ProtocolContext {
        &self.ctx
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn nodes(&self) -> &[SimNode] {
        &self.nodes
    }

    pub fn directory(&self) -> &SnapshotDirectory {
        &self.dir
    }

    pub fn client(&self, c: ClientId) -> &Client {
        &self.slots[c as usize].client
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    fn record(&mut self, kind: EventKind, src: Component, dst: Component, payload: Payload) {
        if matches!(kind, EventKind::Invoke | EventKind::Respond) {
            let mut h = DefaultHasher::new();
            self.history_hash.hash(&mut h);
            serde_json::to_string(&payload).unwrap_or_default().hash(&mut h);
            self.history_hash = h.finish();
        }
        self.trace.push(TraceEvent { step: self.step, kind, src, dst, payload });
    }

    /// Halts every client whose crash step has been reached.
    pub fn tick_crashes(&mut self) {
        for c in 0..self.slots.len() {
            let slot = &self.slots[c];
            if !slot.crashed && slot.crash_at.is_some_and(|s| self.step >= s) {
                self.slots[c].crashed = true;
                self.reads_in_flight.remove(&(c as ClientId));
                self.record(
                    EventKind::Crash,
                    Component::Harness,
                    Component::Client(c as ClientId),
                    Payload::Crash { client: c as ClientId },
                );
            }
        }
    }

    /// Enabled actions in a fixed order: invocations, then deliveries by
    /// channel.
    pub fn enabled(&self) -> Vec<ActionKey> {
        let mut out: Vec<ActionKey> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.live() && s.current.is_none() && s.next < s.script.len())
            .map(|(c, _)| ActionKey::Invoke(c as ClientId))
            .collect();
        out.extend(self.channels.keys().map(|&(src, dst)| ActionKey::Deliver { src, dst }));
        out
    }

    /// No operation of a live client is in flight and every channel is empty.
    pub fn is_quiescent(&self) -> bool {
        self.channels.is_empty() && self.slots.iter().all(|s| s.crashed || s.current.is_none())
    }

    fn note_quiescence(&mut self) {
        let q = self.is_quiescent();
        if q && !self.was_quiescent {
            let nodes = self
                .nodes
                .iter()
                .map(|n| NodeUsage {
                    node: n.index(),
                    honest: n.is_honest(),
                    fragments: n.store().len(),
                    bytes: n.store().stored_bytes(),
                })
                .collect();
            self.record(EventKind::Quiescent, Component::Harness, Component::Harness, Payload::Quiescent { nodes });
        }
        self.was_quiescent = q;
    }

    fn send(&mut self, src: Component, dst: Component, env: Envelope) {
        self.record(EventKind::Send, src, dst, Payload::Message(env.clone()));
        self.channels.entry((src, dst)).or_default().push_back(env);
    }

    /// Executes one action and advances the step counter.
    pub fn execute(&mut self, key: ActionKey) -> Result<(), SimError> {
        match key {
            ActionKey::Invoke(c) => self.invoke(c)?,
            ActionKey::Deliver { src, dst } => self.deliver(src, dst)?,
        }
        self.step += 1;
        self.note_quiescence();
        Ok(())
    }

    fn invoke(&mut self, c: ClientId) -> Result<(), SimError> {
        let key = ActionKey::Invoke(c);
        let slot = &mut self.slots[c as usize];
        if slot.crashed || slot.current.is_some() || slot.next >= slot.script.len() {
            return Err(SimError::NotEnabled(key));
        }
        let spec = slot.script[slot.next].clone();
        let op = OpId { client: c, seq: slot.next as u32 };
        slot.next += 1;
        let is_write = matches!(spec, OpSpec::Write(_));
        slot.current = Some((op, is_write));
        let call = match &spec {
            OpSpec::Write(v) => Call::Write { value: v.clone() },
            OpSpec::Read => Call::Read,
        };
        self.record(EventKind::Invoke, Component::Harness, Component::Client(c), Payload::Invoke { op, call });
        let ctx = Arc::clone(&self.ctx);
        let slot = &mut self.slots[c as usize];
        let step = match spec {
            OpSpec::Write(v) => slot.client.start_write(&ctx, v)?,
            OpSpec::Read => slot.client.start_read(&ctx)?,
        };
        self.apply_client_step(c, op, step);
        Ok(())
    }

    fn deliver(&mut self, src: Component, dst: Component) -> Result<(), SimError> {
        let key = ActionKey::Deliver { src, dst };
        let queue = self.channels.get_mut(&(src, dst)).ok_or(SimError::NotEnabled(key))?;
        let env = queue.pop_front().ok_or(SimError::NotEnabled(key))?;
        if queue.is_empty() {
            self.channels.remove(&(src, dst));
        }
        self.record(EventKind::Deliver, src, dst, Payload::Message(env.clone()));
        match (dst, env.body) {
            (Component::Node(i), Body::NodeRequest(req)) => {
                let is_free = matches!(req, NodeRequest::Free { .. });
                for resp in self.nodes[i].handle(req) {
                    self.send(dst, src, Envelope { op: env.op, body: Body::NodeResponse(resp) });
                }
                if is_free && self.nodes[i].is_honest() {
                    self.check_retention();
                }
            }
            (Component::Dir, Body::DirRequest(request)) => {
                let Component::Client(c) = src else { return Ok(()) };
                let response = match &request {
                    DirRequest::Update { update } => {
                        if let Err(e) = self.dir.update(c, update) {
                            self.violations.push(format!("step {}: directory rejected update: {e}", self.step));
                        }
                        DirResponse::UpdateAck
                    }
                    DirRequest::Scan => DirResponse::ScanResp { snapshot: Arc::new(self.dir.scan()) },
                };
                self.record(
                    EventKind::DirAtomicityPoint,
                    src,
                    Component::Dir,
                    Payload::DirOp { op: env.op, request, response: response.clone() },
                );
                self.send(Component::Dir, src, Envelope { op: env.op, body: Body::DirResponse(response) });
            }
            (Component::Client(c), body) => {
                let slot = &self.slots[c as usize];
                if slot.crashed {
                    return Ok(());
                }
                let ctx = Arc::clone(&self.ctx);
                let slot = &mut self.slots[c as usize];
                let step = match (&body, src) {
                    (Body::DirResponse(resp), _) => slot.client.on_dir_response(&ctx, resp)?,
                    (Body::NodeResponse(resp), Component::Node(i)) => slot.client.on_node_response(&ctx, i, resp)?,
                    _ => Step::default(),
                };
                let op = slot.current.map_or(env.op, |(op, _)| op);
                self.apply_client_step(c, op, step);
            }
            _ => {}
        }
        Ok(())
    }

    fn apply_client_step(&mut self, c: ClientId, op: OpId, step: Step) {
        let me = Component::Client(c);
        for action in step.actions {
            match action {
                Action::ToNode(i, req) => self.send(me, Component::Node(i), Envelope { op, body: Body::NodeRequest(req) }),
                Action::ToDir(req) => self.send(me, Component::Dir, Envelope { op, body: Body::DirRequest(req) }),
            }
        }
        if let Some(ptr) = step.fixed_read {
            self.reads_in_flight.insert(c, ptr);
            self.check_retention();
        }
        if let Some(done) = step.completed {
            self.reads_in_flight.remove(&c);
            self.slots[c as usize].current = None;
            let ret = match done {
                Completion::Write { ts } => Ret::WriteAck { ts },
                Completion::Read { value, ts, source } => Ret::read(value, ts, source),
            };
            self.record(EventKind::Respond, me, Component::Harness, Payload::Respond { op, ret });
        }
    }

    /// Every in-flight read must still find `k` honest nodes of its pointer's
    /// set holding the fragment.
    fn check_retention(&mut self) {
        let k = self.ctx.config.k;
        let mut found = Vec::new();
        for (&reader, ptr) in &self.reads_in_flight {
            let holders = ptr
                .set
                .iter()
                .filter(|&&i| self.nodes[i].is_honest() && self.nodes[i].store().holds(ptr.ts))
                .count();
            if holders < k {
                found.push(format!(
                    "step {}: retention: read of client {reader} at {} has only {holders} honest holders (k = {k})",
                    self.step, ptr.ts
                ));
            }
        }
        self.violations.extend(found);
    }

    /// 128-bit digest of the protocol state and the history so far.
    pub fn fingerprint(&self) -> (u64, u64) {
        let digest = |salt: u64| {
            let mut h = DefaultHasher::new();
            salt.hash(&mut h);
            self.slots.hash(&mut h);
            self.nodes.hash(&mut h);
            self.dir.hash(&mut h);
            self.channels.hash(&mut h);
            self.reads_in_flight.hash(&mut h);
            self.history_hash.hash(&mut h);
            self.violations.len().hash(&mut h);
            h.finish()
        };
        (digest(0x5EED), digest(0xFACE))
    }

    /// Closes the run: reports starved clients and appends the `end` event.
    pub fn finish(mut self, step_limit_hit: bool) -> RunResult {
        let starved = self
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.live() && (s.current.is_some() || s.next < s.script.len()))
            .map(|(c, s)| StarvedClient {
                client: c as ClientId,
                pending: match s.current {
                    Some((_, true)) => "write",
                    Some((_, false)) => "read",
                    None => "idle",
                }
                .to_string(),
            })
            .collect();
        let summary = RunSummary { starved, step_limit_hit, violations: self.violations.clone() };
        self.record(EventKind::End, Component::Harness, Component::Harness, Payload::End(summary.clone()));
        RunResult { trace: self.trace, summary, steps: self.step }
    }

    /// Completes the run by always taking the first enabled action.
    pub fn run_to_completion(mut self, max_steps: u64) -> Result<RunResult, SimError> {
        loop {
            self.tick_crashes();
            if self.step >= max_steps {
                return Ok(self.finish(true));
            }
            let Some(&key) = self.enabled().first() else { return Ok(self.finish(false)) };
            self.execute(key)?;
        }
    }
}

/// Runs a scenario under its random or scripted schedule.
pub fn run(scenario: &Scenario) -> Result<RunResult, SimError> {
    let sim = Simulation::new(scenario)?;
    let sched = &scenario.schedule;
    match sched.policy {
        Policy::Exhaustive => Err(SimError::ExhaustivePolicy),
        Policy::Random => run_random(sim, sched.seed, sched.fairness, sched.drain_probability, sched.max_steps),
        Policy::Scripted => {
            let mut sim = sim;
            for (index, &key) in sched.script.iter().enumerate() {
                sim.tick_crashes();
                if !sim.enabled().contains(&key) {
                    return Err(SimError::ScriptStuck { index, key });
                }
                sim.execute(key)?;
            }
            sim.run_to_completion(sched.max_steps)
        }
    }
}

/// Steps after which channel speeds are redrawn.
const SPEED_EPOCH: u64 = 512;

fn component_code(c: Component) -> u64 {
    match c {
        Component::Harness => 0,
        Component::Dir => 1,
        Component::Client(id) => 2 + (u64::from(id) << 2),
        Component::Node(i) => 3 + ((i as u64) << 2),
    }
}

/// Relative speed of an action during one epoch: a power of four in
/// `1..=256`, fixed by the seed.
fn speed(seed: u64, epoch: u64, key: ActionKey) -> u32 {
    let code = match key {
        ActionKey::Invoke(c) => u64::from(c) << 1,
        ActionKey::Deliver { src, dst } => ((component_code(src) << 24) ^ component_code(dst)) << 1 | 1,
    };
    let mix = seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ code.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    1 << (2 * rand_chacha::ChaCha8Rng::seed_from_u64(mix).gen_range(0..=4))
}

/// Random scheduling. Each action is chosen with probability proportional
/// to a seeded per-channel speed, so some channels lag far behind others;
/// an action enabled for `fairness` steps is taken before anything else.
/// With probability `drain` per step the scheduler stops admitting
/// invocations until the system is quiescent.
pub fn run_random(
    mut sim: Simulation,
    seed: u64,
    fairness: u64,
    drain: f64,
    max_steps: u64,
) -> Result<RunResult, SimError> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut since: BTreeMap<ActionKey, u64> = BTreeMap::new();
    let mut speeds: BTreeMap<ActionKey, u32> = BTreeMap::new();
    let mut draining = false;
    loop {
        sim.tick_crashes();
        if sim.step >= max_steps {
            return Ok(sim.finish(true));
        }
        let enabled = sim.enabled();
        if enabled.is_empty() {
            return Ok(sim.finish(false));
        }
        if sim.step.is_multiple_of(SPEED_EPOCH) {
            speeds.clear();
        }
        since.retain(|k, _| enabled.contains(k));
        for &k in &enabled {
            since.entry(k).or_insert(sim.step);
        }
        let has_delivery = enabled.iter().any(|k| matches!(k, ActionKey::Deliver { .. }));
        if draining && (sim.is_quiescent() || !has_delivery) {
            draining = false;
        }
        let candidates: Vec<ActionKey> = if draining {
            enabled.into_iter().filter(|k| matches!(k, ActionKey::Deliver { .. })).collect()
        } else {
            enabled
        };
        let overdue = candidates
            .iter()
            .filter(|k| sim.step - since[k] >= fairness)
            .min_by_key(|k| since[k])
            .copied();
        let key = overdue.unwrap_or_else(|| {
            let epoch = sim.step / SPEED_EPOCH;
            let weights: Vec<u32> =
                candidates.iter().map(|&k| *speeds.entry(k).or_insert_with(|| speed(seed, epoch, k))).collect();
            let mut x = rng.gen_range(0..weights.iter().sum::<u32>());
            let i = weights.iter().position(|&w| x < w || {
                x -= w;
                false
            });
            candidates[i.expect("x is below the total weight")]
        });
        if !draining && drain > 0.0 && rng.gen_bool(drain) {
            draining = true;
        }
        since.remove(&key);
        sim.execute(key)?;
    }
}
