//! Wire messages between clients, data nodes and the directory.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::directory::MetadataUpdate;
use crate::types::{ClientId, Fragment, MetadataVector, Pointer, Timestamp};

/// Identifies one register operation: the issuing client and its local
/// operation counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OpId {
    pub client: ClientId,
    pub seq: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeRequest {
    Write { ts: Timestamp, frag: Fragment },
    Read { ts: Timestamp },
    Free { ts_set: Vec<Timestamp> },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeResponse {
    WriteAck { ts: Timestamp },
    ReadResp { ts: Timestamp, frag: Option<Fragment> },
    FreeAck { ts_set: Vec<Timestamp> },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DirRequest {
    Update { update: MetadataUpdate },
    Scan,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DirResponse {
    UpdateAck,
    ScanResp { snapshot: Arc<MetadataVector> },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Body {
    NodeRequest(NodeRequest),
    NodeResponse(NodeResponse),
    DirRequest(DirRequest),
    DirResponse(DirResponse),
}

/// A message in flight, tagged with the operation that caused it. The tag is
/// bookkeeping for accounting and is not read by protocol logic.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Envelope {
    pub op: OpId,
    pub body: Body,
}

const TS_BYTES: usize = 10;
const DIGEST_BYTES: usize = 32;

fn pointer_bytes(p: &Pointer) -> usize {
    TS_BYTES + p.set.len() + p.hash.iter().map(|h| if h.is_some() { DIGEST_BYTES } else { 1 }).sum::<usize>()
}

impl Body {
    /// Bytes of erasure-coded data carried by this message.
    pub fn data_bytes(&self) -> usize {
        match self {
            Body::NodeRequest(NodeRequest::Write { frag, .. }) => frag.len(),
            Body::NodeResponse(NodeResponse::ReadResp { frag: Some(f), .. }) => f.len(),
            _ => 0,
        }
    }

    /// Approximate size of everything that is not fragment data.
    pub fn metadata_bytes(&self) -> usize {
        match self {
            Body::NodeRequest(NodeRequest::Write { .. })
            | Body::NodeRequest(NodeRequest::Read { .. })
            | Body::NodeResponse(NodeResponse::WriteAck { .. })
            | Body::NodeResponse(NodeResponse::ReadResp { .. }) => TS_BYTES,
            Body::NodeRequest(NodeRequest::Free { ts_set })
            | Body::NodeResponse(NodeResponse::FreeAck { ts_set }) => TS_BYTES * ts_set.len(),
            Body::DirRequest(DirRequest::Scan) | Body::DirResponse(DirResponse::UpdateAck) => 1,
            Body::DirRequest(DirRequest::Update { update }) => {
                update.writeptr.as_ref().map_or(0, pointer_bytes)
                    + update.frozenptrlist.as_ref().map_or(0, |l| l.iter().map(pointer_bytes).sum())
                    + update.frozenindex.as_ref().map_or(0, |l| 8 * l.len())
                    + update.readindex.map_or(0, |_| 8)
            }
            Body::DirResponse(DirResponse::ScanResp { snapshot }) => snapshot
                .iter()
                .map(|e| {
                    pointer_bytes(&e.writeptr)
                        + e.frozenptrlist.iter().map(pointer_bytes).sum::<usize>()
                        + 8 * e.frozenindex.len()
                        + 8
                })
                .sum(),
        }
    }
}
