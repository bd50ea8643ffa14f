//! Honest data node: a timestamp-keyed fragment store with write, read and
//! free. Keys are canonical timestamp encodings, so the store needs nothing
//! beyond a plain key-value interface.

use std::collections::BTreeMap;

use crate::messages::{NodeRequest, NodeResponse};
use crate::types::{Fragment, Timestamp};

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct DataNode {
    data: BTreeMap<[u8; 10], Fragment>,
}

impl DataNode {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `frag` under `ts`, replacing any previous fragment, and acks.
    pub fn write(&mut self, ts: Timestamp, frag: Fragment) -> Timestamp {
        self.data.insert(ts.to_bytes(), frag);
        ts
    }

    pub fn read(&self, ts: Timestamp) -> (Timestamp, Option<Fragment>) {
        (ts, self.data.get(&ts.to_bytes()).cloned())
    }

    /// Removes every listed timestamp; absent keys are ignored.
    pub fn free<'a>(&mut self, ts_set: impl IntoIterator<Item = &'a Timestamp>) {
        for ts in ts_set {
            self.data.remove(&ts.to_bytes());
        }
    }

    pub fn holds(&self, ts: Timestamp) -> bool {
        self.data.contains_key(&ts.to_bytes())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn stored_bytes(&self) -> usize {
        self.data.values().map(Fragment::len).sum()
    }

    /// Stored timestamps in ascending order.
    pub fn timestamps(&self) -> impl Iterator<Item = Timestamp> + '_ {
        self.data.keys().map(|k| Timestamp::from_bytes(k).expect("keys are canonical encodings"))
    }

    pub fn handle(&mut self, req: NodeRequest) -> NodeResponse {
        match req {
            NodeRequest::Write { ts, frag } => NodeResponse::WriteAck { ts: self.write(ts, frag) },
            NodeRequest::Read { ts } => {
                let (ts, frag) = self.read(ts);
                NodeResponse::ReadResp { ts, frag }
            }
            NodeRequest::Free { ts_set } => {
                self.free(&ts_set);
                NodeResponse::FreeAck { ts_set }
            }
        }
    }
}
