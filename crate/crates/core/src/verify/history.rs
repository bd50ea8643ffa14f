//! Register histories: invocation/response intervals per operation.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::messages::OpId;
use crate::sim::trace::{Call, Payload, Ret, TraceEvent};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HistoryError {
    #[error("malformed history: {0}")]
    Malformed(String),
}

fn malformed(msg: impl Into<String>) -> HistoryError {
    HistoryError::Malformed(msg.into())
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Write { value: Vec<u8> },
    /// `value` is the returned value; `None` is the initial value ⊥ (or
    /// nothing at all while the read is pending).
    Read { value: Option<Vec<u8>> },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Operation {
    pub id: OpId,
    pub kind: OpKind,
    /// Global position of the invocation.
    pub invoke: u64,
    /// Global position of the response; `None` while pending.
    pub response: Option<u64>,
}

impl Operation {
    pub fn write(id: OpId, value: Vec<u8>, invoke: u64, response: Option<u64>) -> Self {
        Operation { id, kind: OpKind::Write { value }, invoke, response }
    }

    pub fn read(id: OpId, value: Option<Vec<u8>>, invoke: u64, response: Option<u64>) -> Self {
        Operation { id, kind: OpKind::Read { value }, invoke, response }
    }

    pub fn is_write(&self) -> bool {
        matches!(self.kind, OpKind::Write { .. })
    }

    pub fn is_complete(&self) -> bool {
        self.response.is_some()
    }

    /// `self` responded before `other` was invoked.
    pub fn precedes(&self, other: &Operation) -> bool {
        self.response.is_some_and(|r| r < other.invoke)
    }
}

/// A well-formed history: per client, operations do not overlap and at most
/// the last one is pending; every write value is unique.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    ops: Vec<Operation>,
}

impl History {
    pub fn new(mut ops: Vec<Operation>) -> Result<Self, HistoryError> {
        ops.sort_by_key(|o| (o.invoke, o.id));
        let mut ids = BTreeSet::new();
        let mut values = BTreeSet::new();
        let mut times = BTreeSet::new();
        let mut per_client: BTreeMap<_, Vec<&Operation>> = BTreeMap::new();
        for op in &ops {
            if !ids.insert(op.id) {
                return Err(malformed(format!("operation {:?} appears twice", op.id)));
            }
            if op.response.is_some_and(|r| r <= op.invoke) {
                return Err(malformed(format!("operation {:?} responds before it is invoked", op.id)));
            }
            for t in std::iter::once(op.invoke).chain(op.response) {
                if !times.insert(t) {
                    return Err(malformed(format!("time {t} is used by two events")));
                }
            }
            if let OpKind::Write { value } = &op.kind {
                if !values.insert(value.clone()) {
                    return Err(malformed(format!("value {} is written twice", hex::encode(value))));
                }
            }
            per_client.entry(op.id.client).or_default().push(op);
        }
        for (client, list) in per_client {
            for pair in list.windows(2) {
                if !pair[0].precedes(pair[1]) {
                    return Err(malformed(format!("client {client} has overlapping operations")));
                }
            }
        }
        Ok(History { ops })
    }

    /// Extracts the history from the invoke and respond events of a trace;
    /// event positions serve as time.
    pub fn from_trace(trace: &[TraceEvent]) -> Result<Self, HistoryError> {
        let mut open: BTreeMap<OpId, Operation> = BTreeMap::new();
        let mut done = Vec::new();
        for (pos, ev) in trace.iter().enumerate() {
            let pos = pos as u64;
            match &ev.payload {
                Payload::Invoke { op, call } => {
                    let o = match call {
                        Call::Write { value } => Operation::write(*op, value.clone(), pos, None),
                        Call::Read => Operation::read(*op, None, pos, None),
                    };
                    if open.insert(*op, o).is_some() {
                        return Err(malformed(format!("operation {op:?} invoked twice")));
                    }
                }
                Payload::Respond { op, ret } => {
                    let mut o = open.remove(op).ok_or_else(|| malformed(format!("response to unknown {op:?}")))?;
                    match (&mut o.kind, ret) {
                        (OpKind::Write { .. }, Ret::WriteAck { .. }) => {}
                        (OpKind::Read { value }, Ret::ReadResp { value: v, .. }) => *value = v.clone(),
                        _ => return Err(malformed(format!("response to {op:?} has the wrong type"))),
                    }
                    o.response = Some(pos);
                    done.push(o);
                }
                _ => {}
            }
        }
        done.extend(open.into_values());
        History::new(done)
    }

    /// Operations ordered by invocation.
    pub fn ops(&self) -> &[Operation] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn get(&self, id: OpId) -> Option<&Operation> {
        self.ops.iter().find(|o| o.id == id)
    }

    /// Values returned by completed reads.
    pub fn read_values(&self) -> BTreeSet<&[u8]> {
        self.ops
            .iter()
            .filter(|o| o.is_complete())
            .filter_map(|o| match &o.kind {
                OpKind::Read { value: Some(v) } => Some(v.as_slice()),
                _ => None,
            })
            .collect()
    }

    /// Operations a linearization must contain: every completed operation
    /// and each pending write whose value some read returned. A pending
    /// write nobody observed can always be linearized last or dropped, so
    /// leaving it out loses nothing.
    pub fn effective(&self) -> Vec<&Operation> {
        let observed = self.read_values();
        self.ops
            .iter()
            .filter(|o| match &o.kind {
                _ if o.is_complete() => true,
                OpKind::Write { value } => observed.contains(value.as_slice()),
                OpKind::Read { .. } => false,
            })
            .collect()
    }
}
