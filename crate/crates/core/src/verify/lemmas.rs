//! Structural checks of protocol properties on recorded traces.

use std::collections::BTreeMap;

use super::history::{History, OpKind};
use crate::messages::{Body, DirRequest, Envelope, NodeRequest, OpId};
use crate::sim::trace::{Component, EventKind, Payload, Ret, TraceEvent};
use crate::types::Timestamp;

/// Timestamp of every operation that has one: the returned timestamp for
/// completed operations, and for pending writes the one they dispersed.
pub fn op_timestamps(trace: &[TraceEvent]) -> BTreeMap<OpId, Timestamp> {
    let mut out = BTreeMap::new();
    for ev in trace {
        match &ev.payload {
            Payload::Respond { op, ret: Ret::WriteAck { ts } | Ret::ReadResp { ts, .. } } => {
                out.insert(*op, *ts);
            }
            Payload::Message(Envelope { op, body: Body::NodeRequest(NodeRequest::Write { ts, .. }) })
                if ev.kind == EventKind::Send =>
            {
                out.entry(*op).or_insert(*ts);
            }
            _ => {}
        }
    }
    out
}

/// If `a` precedes `b` then `ts(a) <= ts(b)`, strictly when `b` writes.
pub fn check_partial_order(h: &History, ts: &BTreeMap<OpId, Timestamp>) -> Vec<String> {
    let mut out = Vec::new();
    let ops: Vec<_> = h.ops().iter().filter_map(|o| ts.get(&o.id).map(|t| (o, *t))).collect();
    for &(a, ta) in &ops {
        for &(b, tb) in &ops {
            if !a.precedes(b) {
                continue;
            }
            let ok = if b.is_write() { ta < tb } else { ta <= tb };
            if !ok {
                out.push(format!("partial order: {:?} at {ta} precedes {:?} at {tb}", a.id, b.id));
            }
        }
    }
    out
}

pub fn check_unique_writes(h: &History, ts: &BTreeMap<OpId, Timestamp>) -> Vec<String> {
    let mut seen: BTreeMap<Timestamp, OpId> = BTreeMap::new();
    let mut out = Vec::new();
    for o in h.ops().iter().filter(|o| o.is_write()) {
        if let Some(&t) = ts.get(&o.id) {
            if let Some(prev) = seen.insert(t, o.id) {
                out.push(format!("unique writes: {prev:?} and {:?} share {t}", o.id));
            }
        }
    }
    out
}

/// Every non-⊥ read returns the value of exactly one write, and that write
/// carries the read's timestamp; ⊥ comes with the initial timestamp.
pub fn check_integrity(h: &History, ts: &BTreeMap<OpId, Timestamp>) -> Vec<String> {
    let mut out = Vec::new();
    for r in h.ops().iter().filter(|o| o.is_complete()) {
        let OpKind::Read { value } = &r.kind else { continue };
        let rts = ts.get(&r.id).copied().unwrap_or(Timestamp::ZERO);
        let Some(v) = value else {
            if !rts.is_zero() {
                out.push(format!("integrity: {:?} returns ⊥ with {rts}", r.id));
            }
            continue;
        };
        let writers: Vec<_> = h
            .ops()
            .iter()
            .filter(|w| matches!(&w.kind, OpKind::Write { value } if value == v))
            .collect();
        match writers.as_slice() {
            [w] if ts.get(&w.id) == Some(&rts) => {}
            [w] => out.push(format!(
                "integrity: {:?} returns the value of {:?} but with {rts} instead of {:?}",
                r.id,
                w.id,
                ts.get(&w.id)
            )),
            _ => out.push(format!("integrity: {:?} returns a value written {} times", r.id, writers.len())),
        }
    }
    out
}

/// Positions of each operation's directory atomicity points, with the
/// request kind (`true` for updates).
fn dir_points(trace: &[TraceEvent]) -> BTreeMap<OpId, Vec<(usize, bool)>> {
    let mut out: BTreeMap<OpId, Vec<(usize, bool)>> = BTreeMap::new();
    for (pos, ev) in trace.iter().enumerate() {
        if let Payload::DirOp { op, request, .. } = &ev.payload {
            out.entry(*op).or_default().push((pos, matches!(request, DirRequest::Update { .. })));
        }
    }
    out
}

/// A read that took a frozen pointer from writer `w` must see two writes of
/// `w` around it: the collecting scan of the write that produced the
/// timestamp and the update of `w`'s next write both fall between the
/// read's update and scan.
pub fn check_frozen_selection(trace: &[TraceEvent], h: &History, ts: &BTreeMap<OpId, Timestamp>) -> Vec<String> {
    let points = dir_points(trace);
    let mut out = Vec::new();
    for ev in trace {
        let Payload::Respond { op, ret: Ret::ReadResp { ts: rts, writer: Some(w), frozen: true, .. } } = &ev.payload
        else {
            continue;
        };
        let fail = |why: &str| format!("frozen selection: {op:?} reading {rts} from client {w}: {why}");
        let Some(&[(u_r, true), (s_r, false)]) = points.get(op).map(Vec::as_slice) else {
            out.push(fail("read lacks its update and scan"));
            continue;
        };
        let writes: Vec<OpId> =
            h.ops().iter().filter(|o| o.id.client == *w && o.is_write()).map(|o| o.id).collect();
        let Some(i) = writes.iter().position(|id| ts.get(id) == Some(rts)) else {
            out.push(fail("no write of that writer has the timestamp"));
            continue;
        };
        let collect = points.get(&writes[i]).and_then(|p| p.get(2)).map(|p| p.0);
        let next_update = writes
            .get(i + 1)
            .and_then(|id| points.get(id))
            .and_then(|p| p.iter().find(|(_, upd)| *upd))
            .map(|p| p.0);
        match (collect, next_update) {
            (Some(c), Some(u)) if u_r < c && c < s_r && u_r < u && u < s_r => {}
            _ => out.push(fail("writer's scan and next update are not inside the read")),
        }
    }
    out
}

/// Per channel, deliveries are a prefix of sends in the same order.
pub fn check_fifo(trace: &[TraceEvent]) -> Vec<String> {
    let mut channels: BTreeMap<(Component, Component), (Vec<&Envelope>, usize)> = BTreeMap::new();
    let mut out = Vec::new();
    for ev in trace {
        let Payload::Message(env) = &ev.payload else { continue };
        let (sent, delivered) = channels.entry((ev.src, ev.dst)).or_default();
        match ev.kind {
            EventKind::Send => sent.push(env),
            EventKind::Deliver => {
                if sent.get(*delivered) != Some(&env) {
                    out.push(format!("fifo: step {} delivers out of order on {} -> {}", ev.step, ev.src, ev.dst));
                }
                *delivered += 1;
            }
            _ => {}
        }
    }
    out
}
