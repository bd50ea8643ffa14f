//! Checks over recorded traces: linearizability, the protocol lemmas,
//! wait-freedom, FIFO delivery, and storage and bandwidth accounting.

pub mod accounting;
pub mod history;
pub mod lemmas;
pub mod linearizability;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use accounting::{check_amnesic, check_bandwidth, AmnesicReport, BandwidthReport, OpCost, OpType};
pub use history::{History, HistoryError, OpKind, Operation};
pub use linearizability::{check_linearizable, replay, Edge, Verdict, Violation};

use crate::sim::trace::{Payload, TraceEvent};
use crate::types::ClientId;

/// Clients that did not crash but were left with unfinished work, and what
/// they were stuck on.
pub fn check_wait_free(trace: &[TraceEvent], h: &History) -> Vec<String> {
    let crashed: Vec<ClientId> = trace
        .iter()
        .filter_map(|e| match e.payload {
            Payload::Crash { client } => Some(client),
            _ => None,
        })
        .collect();
    let mut starved: BTreeMap<ClientId, &str> = BTreeMap::new();
    for o in h.ops().iter().filter(|o| !o.is_complete() && !crashed.contains(&o.id.client)) {
        starved.insert(o.id.client, if o.is_write() { "write" } else { "read" });
    }
    for e in trace {
        if let Payload::End(summary) = &e.payload {
            for s in &summary.starved {
                starved.entry(s.client).or_insert(s.pending.as_str());
            }
        }
    }
    starved.into_iter().map(|(c, what)| format!("client {c}: {what} starved")).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub writes: usize,
    pub reads: usize,
    pub pending: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceReport {
    pub ops: OpCounts,
    pub linearizability: Verdict,
    pub wait_free: bool,
    pub starved: Vec<String>,
    /// Lemma and FIFO violations found on the trace.
    pub lemma_violations: Vec<String>,
    /// Violations the harness flagged while running.
    pub harness_violations: Vec<String>,
    pub amnesic: AmnesicReport,
    pub bandwidth_ok: bool,
    pub bandwidth_violations: Vec<String>,
}

impl TraceReport {
    pub fn passed(&self) -> bool {
        self.linearizability.linearizable
            && self.wait_free
            && self.lemma_violations.is_empty()
            && self.harness_violations.is_empty()
            && self.amnesic.within_bound()
            && self.bandwidth_ok
    }

    /// Human-readable reasons for failure.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(v) = &self.linearizability.violation {
            out.push(format!("not linearizable: {:?} vs {:?}: {}", v.pair[0], v.pair[1], v.reason));
        }
        out.extend(self.starved.iter().cloned());
        out.extend(self.lemma_violations.iter().cloned());
        out.extend(self.harness_violations.iter().cloned());
        if !self.amnesic.within_bound() {
            out.push(format!(
                "amnesic bound {} bytes exceeded at steps {:?}",
                self.amnesic.bound_bytes, self.amnesic.excess
            ));
        }
        out.extend(self.bandwidth_violations.iter().cloned());
        out
    }
}

/// Runs every check on one trace.
pub fn verify_trace(trace: &[TraceEvent]) -> Result<TraceReport, HistoryError> {
    let h = History::from_trace(trace)?;
    let ts = lemmas::op_timestamps(trace);
    let mut lemma_violations = lemmas::check_partial_order(&h, &ts);
    lemma_violations.extend(lemmas::check_unique_writes(&h, &ts));
    lemma_violations.extend(lemmas::check_integrity(&h, &ts));
    lemma_violations.extend(lemmas::check_frozen_selection(trace, &h, &ts));
    lemma_violations.extend(lemmas::check_fifo(trace));
    let starved = check_wait_free(trace, &h);
    let harness_violations = trace
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::End(s) => Some(s.violations.clone()),
            _ => None,
        })
        .flatten()
        .collect();
    let bandwidth = check_bandwidth(trace);
    let ops = OpCounts {
        writes: h.ops().iter().filter(|o| o.is_write()).count(),
        reads: h.ops().iter().filter(|o| !o.is_write()).count(),
        pending: h.ops().iter().filter(|o| !o.is_complete()).count(),
    };
    Ok(TraceReport {
        ops,
        linearizability: check_linearizable(&h),
        wait_free: starved.is_empty(),
        starved,
        lemma_violations,
        harness_violations,
        amnesic: check_amnesic(trace),
        bandwidth_ok: bandwidth.violations.is_empty(),
        bandwidth_violations: bandwidth.violations,
    })
}
