//! Writer and reader state machines.
//!
//! A client is driven entirely by the caller: `start_write` / `start_read`
//! begin an operation, and `on_dir_response` / `on_node_response` feed it
//! the replies. Each call returns the messages to send and, when the
//! operation finishes, its completion.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::erasure::{ErasureCodec, ErasureError};
use crate::messages::{DirRequest, DirResponse, NodeRequest, NodeResponse};
use crate::directory::MetadataUpdate;
use crate::types::{
    build_cross_checksum, hash_fragment, ClientId, ConfigError, Fragment, MetadataEntry, NodeId, Pointer,
    SystemConfig, Timestamp,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("client {0} already has an operation in progress")]
    Busy(ClientId),
    #[error("client {client} received {what} while {phase}")]
    Unexpected { client: ClientId, what: &'static str, phase: String },
    #[error("value length {got} does not match configured length {expected}")]
    ValueLength { got: usize, expected: usize },
    #[error(transparent)]
    Erasure(#[from] ErasureError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Shared, immutable protocol parameters.
#[derive(Clone, Debug)]
pub struct ProtocolContext {
    pub config: SystemConfig,
    pub codec: ErasureCodec,
}

impl ProtocolContext {
    /// Builds a context, enforcing the resilience bound.
    pub fn new(config: SystemConfig) -> Result<Self, ClientError> {
        config.validate()?;
        Self::new_unchecked(config)
    }

    /// Builds a context without the `n >= 2t + k` check, for boundary runs.
    pub fn new_unchecked(config: SystemConfig) -> Result<Self, ClientError> {
        config.validate_shape()?;
        Ok(ProtocolContext { config, codec: ErasureCodec::new(config.n, config.k)? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    ToNode(NodeId, NodeRequest),
    ToDir(DirRequest),
}

/// Where a read's pointer came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ReadSource {
    pub writer: ClientId,
    pub frozen: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Completion {
    Write { ts: Timestamp },
    Read { value: Option<Vec<u8>>, ts: Timestamp, source: Option<ReadSource> },
}

/// Output of one client transition.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Step {
    pub actions: Vec<Action>,
    pub completed: Option<Completion>,
    /// Set when a reader has just fixed a non-null `readptr`.
    pub fixed_read: Option<Pointer>,
}

/// Returns the pointer client `reader` should consider from writer `p`'s
/// entry: the frozen one if `p` has already frozen a value for this very
/// read, the written one otherwise.
pub fn readfrom(snapshot: &[MetadataEntry], reader: ClientId, p: ClientId, index: u64) -> &Pointer {
    let entry = &snapshot[p as usize];
    if index > entry.frozenindex[reader as usize] {
        &entry.writeptr
    } else {
        &entry.frozenptrlist[reader as usize]
    }
}

/// The highest-timestamped pointer among `readfrom` over all writers,
/// together with its origin. `None` origin means every candidate was null.
pub fn select_read(snapshot: &[MetadataEntry], reader: ClientId, index: u64) -> (Option<&Pointer>, Option<ReadSource>) {
    let mut best: Option<(&Pointer, ReadSource)> = None;
    for p in 0..snapshot.len() as ClientId {
        let ptr = readfrom(snapshot, reader, p, index);
        let max_ts = best.map_or(Timestamp::ZERO, |(b, _)| b.ts);
        if ptr.ts > max_ts {
            let frozen = index <= snapshot[p as usize].frozenindex[reader as usize];
            best = Some((ptr, ReadSource { writer: p, frozen }));
        }
    }
    (best.map(|(p, _)| p), best.map(|(_, s)| s))
}

pub fn highestread(snapshot: &[MetadataEntry], reader: ClientId, index: u64, n: usize) -> Pointer {
    select_read(snapshot, reader, index).0.cloned().unwrap_or_else(|| Pointer::null(n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WriterPhase {
    Idle,
    Scanning,
    Dispersing,
    Updating,
    CollectingIndices,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WriterState {
    pub writeptr: Pointer,
    pub prevptr: Pointer,
    pub frozenptrlist: Vec<Pointer>,
    pub reservedptrlist: Vec<Pointer>,
    pub frozenindex: Vec<u64>,
    pub phase: WriterPhase,
    pending_value: Option<Vec<u8>>,
}

impl WriterState {
    fn new(n: usize, m: usize) -> Self {
        WriterState {
            writeptr: Pointer::null(n),
            prevptr: Pointer::null(n),
            frozenptrlist: vec![Pointer::null(n); m],
            reservedptrlist: vec![Pointer::null(n); m],
            frozenindex: vec![0; m],
            phase: WriterPhase::Idle,
            pending_value: None,
        }
    }

    /// Timestamps this writer currently protects from garbage collection.
    pub fn retained(&self) -> BTreeSet<Timestamp> {
        self.frozenptrlist.iter().chain(&self.reservedptrlist).map(|p| p.ts).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReaderPhase {
    Idle,
    Announcing,
    Scanning,
    Fetching,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ReaderState {
    pub readindex: u64,
    pub readptr: Pointer,
    pub readlist: Vec<Option<Fragment>>,
    pub phase: ReaderPhase,
    source: Option<ReadSource>,
}

impl ReaderState {
    fn new(n: usize) -> Self {
        ReaderState {
            readindex: 0,
            readptr: Pointer::null(n),
            readlist: vec![None; n],
            phase: ReaderPhase::Idle,
            source: None,
        }
    }
}

/// One client, acting as writer and reader, with at most one operation
/// outstanding.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Client {
    id: ClientId,
    pub writer: WriterState,
    pub reader: ReaderState,
}

impl Client {
    pub fn new(id: ClientId, config: &SystemConfig) -> Self {
        Client { id, writer: WriterState::new(config.n, config.m), reader: ReaderState::new(config.n) }
    }

    pub fn id(&self) -> ClientId {
        self.id
    }

    pub fn is_idle(&self) -> bool {
        self.writer.phase == WriterPhase::Idle && self.reader.phase == ReaderPhase::Idle
    }

    fn phase_name(&self) -> String {
        format!("writer {:?}, reader {:?}", self.writer.phase, self.reader.phase)
    }

    fn unexpected(&self, what: &'static str) -> ClientError {
        ClientError::Unexpected { client: self.id, what, phase: self.phase_name() }
    }

    pub fn start_write(&mut self, ctx: &ProtocolContext, value: Vec<u8>) -> Result<Step, ClientError> {
        if !self.is_idle() {
            return Err(ClientError::Busy(self.id));
        }
        if value.len() != ctx.config.ell {
            return Err(ClientError::ValueLength { got: value.len(), expected: ctx.config.ell });
        }
        let w = &mut self.writer;
        w.prevptr = w.writeptr.clone();
        w.pending_value = Some(value);
        w.phase = WriterPhase::Scanning;
        Ok(Step { actions: vec![Action::ToDir(DirRequest::Scan)], ..Default::default() })
    }

    pub fn start_read(&mut self, _ctx: &ProtocolContext) -> Result<Step, ClientError> {
        if !self.is_idle() {
            return Err(ClientError::Busy(self.id));
        }
        let r = &mut self.reader;
        r.readlist.iter_mut().for_each(|f| *f = None);
        r.readindex += 1;
        r.phase = ReaderPhase::Announcing;
        let update = MetadataUpdate::readindex(r.readindex);
        Ok(Step { actions: vec![Action::ToDir(DirRequest::Update { update })], ..Default::default() })
    }

    pub fn on_dir_response(&mut self, ctx: &ProtocolContext, resp: &DirResponse) -> Result<Step, ClientError> {
        match (self.writer.phase, self.reader.phase, resp) {
            (WriterPhase::Scanning, _, DirResponse::ScanResp { snapshot }) => self.disperse(ctx, snapshot),
            (WriterPhase::Updating, _, DirResponse::UpdateAck) => {
                self.writer.phase = WriterPhase::CollectingIndices;
                Ok(Step { actions: vec![Action::ToDir(DirRequest::Scan)], ..Default::default() })
            }
            (WriterPhase::CollectingIndices, _, DirResponse::ScanResp { snapshot }) => {
                Ok(self.freeze_and_collect(ctx, snapshot))
            }
            (_, ReaderPhase::Announcing, DirResponse::UpdateAck) => {
                self.reader.phase = ReaderPhase::Scanning;
                Ok(Step { actions: vec![Action::ToDir(DirRequest::Scan)], ..Default::default() })
            }
            (_, ReaderPhase::Scanning, DirResponse::ScanResp { snapshot }) => Ok(self.fix_readptr(ctx, snapshot)),
            (_, _, DirResponse::UpdateAck) => Err(self.unexpected("UpdateAck")),
            (_, _, DirResponse::ScanResp { .. }) => Err(self.unexpected("ScanResp")),
        }
    }

    pub fn on_node_response(
        &mut self,
        ctx: &ProtocolContext,
        node: NodeId,
        resp: &NodeResponse,
    ) -> Result<Step, ClientError> {
        match resp {
            NodeResponse::WriteAck { ts } => Ok(self.on_write_ack(ctx, node, *ts)),
            NodeResponse::ReadResp { ts, frag } => self.on_read_resp(ctx, node, *ts, frag.as_ref()),
            // the writer does not wait for free acknowledgements
            NodeResponse::FreeAck { .. } => Ok(Step::default()),
        }
    }

    fn disperse(&mut self, ctx: &ProtocolContext, snapshot: &[MetadataEntry]) -> Result<Step, ClientError> {
        let n = ctx.config.n;
        let wsn = snapshot.iter().map(|e| e.writeptr.ts).max().unwrap_or(Timestamp::ZERO).sn;
        let value = self.writer.pending_value.take().ok_or_else(|| self.unexpected("ScanResp without value"))?;
        let frags = ctx.codec.encode(&value)?;
        let slots: Vec<Option<Fragment>> = frags.iter().cloned().map(Some).collect();
        let checksum = build_cross_checksum(&slots).expect("encode yields n fragments");
        let w = &mut self.writer;
        w.writeptr = Pointer {
            ts: Timestamp::new(wsn + 1, self.id),
            set: BTreeSet::new(),
            hash: checksum.into_iter().map(Some).collect(),
        };
        w.phase = WriterPhase::Dispersing;
        let ts = w.writeptr.ts;
        debug_assert_eq!(frags.len(), n);
        let actions = frags
            .into_iter()
            .enumerate()
            .map(|(i, frag)| Action::ToNode(i, NodeRequest::Write { ts, frag }))
            .collect();
        Ok(Step { actions, ..Default::default() })
    }

    fn on_write_ack(&mut self, ctx: &ProtocolContext, node: NodeId, ats: Timestamp) -> Step {
        let quorum = ctx.config.write_quorum();
        let w = &mut self.writer;
        if w.phase != WriterPhase::Dispersing || ats != w.writeptr.ts || w.writeptr.set.len() >= quorum {
            return Step::default();
        }
        w.writeptr.set.insert(node);
        if w.writeptr.set.len() < quorum {
            return Step::default();
        }
        w.phase = WriterPhase::Updating;
        let update = MetadataUpdate {
            writeptr: Some(w.writeptr.clone()),
            frozenptrlist: Some(w.frozenptrlist.clone()),
            frozenindex: Some(w.frozenindex.clone()),
            readindex: None,
        };
        Step { actions: vec![Action::ToDir(DirRequest::Update { update })], ..Default::default() }
    }

    fn freeze_and_collect(&mut self, ctx: &ProtocolContext, snapshot: &[MetadataEntry]) -> Step {
        let c = self.id;
        let w = &mut self.writer;
        let mut freets = BTreeSet::from([w.prevptr.ts]);
        for (p, entry) in snapshot.iter().enumerate() {
            if p == c as usize {
                continue;
            }
            let index = entry.readindex;
            if index > w.frozenindex[p] {
                // p may be reading prevptr or writeptr concurrently
                freets.insert(w.frozenptrlist[p].ts);
                freets.insert(w.reservedptrlist[p].ts);
                w.frozenptrlist[p] = w.writeptr.clone();
                w.frozenindex[p] = index;
                w.reservedptrlist[p] = w.prevptr.clone();
            }
        }
        let retained = w.retained();
        let ts_set: Vec<Timestamp> = freets.difference(&retained).copied().collect();
        w.phase = WriterPhase::Idle;
        let actions = (0..ctx.config.n)
            .map(|j| Action::ToNode(j, NodeRequest::Free { ts_set: ts_set.clone() }))
            .collect();
        Step { actions, completed: Some(Completion::Write { ts: w.writeptr.ts }), fixed_read: None }
    }

    fn fix_readptr(&mut self, ctx: &ProtocolContext, snapshot: &[MetadataEntry]) -> Step {
        let r = &mut self.reader;
        let (ptr, source) = select_read(snapshot, self.id, r.readindex);
        r.readptr = ptr.cloned().unwrap_or_else(|| Pointer::null(ctx.config.n));
        r.source = source;
        if r.readptr.ts.is_zero() {
            r.phase = ReaderPhase::Idle;
            return Step {
                completed: Some(Completion::Read { value: None, ts: Timestamp::ZERO, source: None }),
                ..Default::default()
            };
        }
        r.phase = ReaderPhase::Fetching;
        let ts = r.readptr.ts;
        let actions = r.readptr.set.iter().map(|&i| Action::ToNode(i, NodeRequest::Read { ts })).collect();
        Step { actions, completed: None, fixed_read: Some(r.readptr.clone()) }
    }

    fn on_read_resp(
        &mut self,
        ctx: &ProtocolContext,
        node: NodeId,
        vts: Timestamp,
        frag: Option<&Fragment>,
    ) -> Result<Step, ClientError> {
        let r = &mut self.reader;
        if r.phase != ReaderPhase::Fetching
            || vts != r.readptr.ts
            || node >= r.readlist.len()
            || r.readlist[node].is_some()
        {
            return Ok(Step::default());
        }
        let Some(frag) = frag else { return Ok(Step::default()) };
        if r.readptr.hash[node] != Some(hash_fragment(frag)) {
            return Ok(Step::default());
        }
        r.readlist[node] = Some(frag.clone());
        if r.readlist.iter().filter(|f| f.is_some()).count() < ctx.config.k {
            return Ok(Step::default());
        }
        let ts = r.readptr.ts;
        r.readptr = Pointer::null(ctx.config.n);
        r.phase = ReaderPhase::Idle;
        let value = ctx.codec.reconstruct(&r.readlist, ctx.config.ell)?;
        Ok(Step {
            completed: Some(Completion::Read { value: Some(value), ts, source: r.source.take() }),
            ..Default::default()
        })
    }
}
