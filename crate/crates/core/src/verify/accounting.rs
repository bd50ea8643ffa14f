//! Storage and communication accounting over traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::messages::{Body, NodeRequest, NodeResponse, OpId};
use crate::sim::trace::{Call, Component, EventKind, NodeUsage, Payload, Ret, TraceEvent};
use crate::types::SystemConfig;

/// System configuration recorded by the `begin` event.
pub fn trace_config(trace: &[TraceEvent]) -> Option<SystemConfig> {
    trace.iter().find_map(|e| match &e.payload {
        Payload::Begin { config, .. } => Some(*config),
        _ => None,
    })
}

/// Honest-node usage at every quiescent point, in trace order.
pub fn quiescent_points(trace: &[TraceEvent]) -> Vec<(u64, &[NodeUsage])> {
    trace
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::Quiescent { nodes } => Some((e.step, nodes.as_slice())),
            _ => None,
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmnesicReport {
    pub quiescent_points: usize,
    pub max_fragments_per_node: usize,
    pub max_total_fragments: usize,
    pub max_total_bytes: usize,
    /// `2 m^2 n ceil(ell / k)` bytes.
    pub bound_bytes: usize,
    /// Steps of quiescent points whose honest storage exceeds the bound.
    pub excess: Vec<u64>,
}

impl AmnesicReport {
    pub fn within_bound(&self) -> bool {
        self.excess.is_empty()
    }
}

pub fn amnesic_bound_bytes(config: &SystemConfig) -> usize {
    2 * config.m * config.m * config.n * config.fragment_len()
}

/// Storage on honest nodes at quiescent points against the amnesic bound.
/// Faulty nodes may store anything and are not counted.
pub fn check_amnesic(trace: &[TraceEvent]) -> AmnesicReport {
    let Some(config) = trace_config(trace) else { return AmnesicReport::default() };
    let mut r = AmnesicReport { bound_bytes: amnesic_bound_bytes(&config), ..Default::default() };
    for (step, nodes) in quiescent_points(trace) {
        let honest = nodes.iter().filter(|u| u.honest);
        let (frags, bytes) = honest.clone().fold((0, 0), |(f, b), u| (f + u.fragments, b + u.bytes));
        r.quiescent_points += 1;
        r.max_fragments_per_node = r.max_fragments_per_node.max(honest.map(|u| u.fragments).max().unwrap_or(0));
        r.max_total_fragments = r.max_total_fragments.max(frags);
        r.max_total_bytes = r.max_total_bytes.max(bytes);
        if bytes > r.bound_bytes {
            r.excess.push(step);
        }
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpType {
    Write,
    Read,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCost {
    pub op: OpId,
    #[serde(rename = "type")]
    pub kind: OpType,
    pub complete: bool,
    /// Read returned ⊥.
    pub bottom: bool,
    /// Fragment bytes: sent to nodes by a write, received by a read.
    pub data_bytes: usize,
    /// Everything else the operation sent, directory traffic included.
    pub metadata_bytes: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandwidthReport {
    pub ops: Vec<OpCost>,
    /// `n ceil(ell / k)`.
    pub write_bytes: usize,
    /// `(t + k) ceil(ell / k)`.
    pub read_bytes_max: usize,
    pub violations: Vec<String>,
}

/// Data-plane bytes per operation. A completed write must disperse exactly
/// `n` fragments; a read may receive at most `t + k` and none for ⊥.
pub fn check_bandwidth(trace: &[TraceEvent]) -> BandwidthReport {
    let Some(config) = trace_config(trace) else { return BandwidthReport::default() };
    let frag = config.fragment_len();
    let mut costs: BTreeMap<OpId, OpCost> = BTreeMap::new();
    for ev in trace {
        match &ev.payload {
            Payload::Invoke { op, call } => {
                let kind = match call {
                    Call::Write { .. } => OpType::Write,
                    Call::Read => OpType::Read,
                };
                costs.insert(
                    *op,
                    OpCost { op: *op, kind, complete: false, bottom: false, data_bytes: 0, metadata_bytes: 0 },
                );
            }
            Payload::Respond { op, ret } => {
                if let Some(c) = costs.get_mut(op) {
                    c.complete = true;
                    c.bottom = matches!(ret, Ret::ReadResp { value: None, .. });
                }
            }
            Payload::Message(env) => {
                let Some(c) = costs.get_mut(&env.op) else { continue };
                match (ev.kind, &env.body, ev.dst) {
                    (EventKind::Send, Body::NodeRequest(NodeRequest::Write { .. }), _) => {
                        c.data_bytes += env.body.data_bytes();
                    }
                    (EventKind::Deliver, Body::NodeResponse(NodeResponse::ReadResp { .. }), Component::Client(_)) => {
                        c.data_bytes += env.body.data_bytes();
                    }
                    _ => {}
                }
                if ev.kind == EventKind::Send {
                    c.metadata_bytes += env.body.metadata_bytes();
                }
            }
            _ => {}
        }
    }
    let mut r = BandwidthReport {
        ops: Vec::new(),
        write_bytes: config.n * frag,
        read_bytes_max: (config.t + config.k) * frag,
        violations: Vec::new(),
    };
    for c in costs.into_values() {
        let bad = match c.kind {
            OpType::Write if c.complete => c.data_bytes != r.write_bytes,
            OpType::Write => c.data_bytes != 0 && c.data_bytes != r.write_bytes,
            OpType::Read if c.bottom => c.data_bytes != 0,
            OpType::Read => c.data_bytes > r.read_bytes_max,
        };
        if bad {
            r.violations.push(format!("bandwidth: {:?} {:?} moved {} data bytes", c.kind, c.op, c.data_bytes));
        }
        r.ops.push(c);
    }
    r
}
