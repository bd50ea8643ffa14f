//! The metadata directory: an atomic snapshot object with one entry per
//! client, updated field-wise and scanned as a whole.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ClientId, MetadataEntry, MetadataVector, Pointer, Timestamp};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DirectoryError {
    #[error("client {client} outside 0..{m}")]
    UnknownClient { client: ClientId, m: usize },
    #[error("update for client {client} carries a list of length {got}, expected {expected}")]
    BadListLength { client: ClientId, got: usize, expected: usize },
    #[error("client {client}: {what} would decrease from {from} to {to}")]
    NonMonotonic { client: ClientId, what: String, from: Timestamp, to: Timestamp },
    #[error("client {client}: frozen timestamp {frozen} not below written timestamp {written}")]
    FrozenNotBelowWritten { client: ClientId, frozen: Timestamp, written: Timestamp },
}

/// Partial entry for `update`; `None` fields are wildcards and leave the
/// stored field untouched.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetadataUpdate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub writeptr: Option<Pointer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozenptrlist: Option<Vec<Pointer>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozenindex: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readindex: Option<u64>,
}

impl MetadataUpdate {
    pub fn readindex(index: u64) -> Self {
        MetadataUpdate { readindex: Some(index), ..Default::default() }
    }

    pub fn is_wildcard(&self) -> bool {
        *self == Self::default()
    }

    pub fn apply_to(&self, entry: &mut MetadataEntry) {
        if let Some(p) = &self.writeptr {
            entry.writeptr = p.clone();
        }
        if let Some(l) = &self.frozenptrlist {
            entry.frozenptrlist = l.clone();
        }
        if let Some(l) = &self.frozenindex {
            entry.frozenindex = l.clone();
        }
        if let Some(i) = self.readindex {
            entry.readindex = i;
        }
    }
}

/// Linearizable Update/Scan interface. Implementations other than the
/// in-memory one (e.g. a replicated snapshot) plug in here.
pub trait Directory {
    fn update(&mut self, client: ClientId, update: &MetadataUpdate) -> Result<(), DirectoryError>;
    fn scan(&self) -> MetadataVector;
}

/// Trusted in-memory snapshot object. Each call takes effect atomically.
///
/// Every update is checked online: written and frozen timestamps may only
/// grow, and frozen timestamps stay below the written one.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SnapshotDirectory {
    n: usize,
    entries: Vec<MetadataEntry>,
}

impl SnapshotDirectory {
    pub fn new(n: usize, m: usize) -> Self {
        SnapshotDirectory { n, entries: vec![MetadataEntry::initial(n, m); m] }
    }

    pub fn entry(&self, client: ClientId) -> Option<&MetadataEntry> {
        self.entries.get(client as usize)
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    fn check(&self, client: ClientId, old: &MetadataEntry, new: &MetadataEntry) -> Result<(), DirectoryError> {
        let m = self.entries.len();
        for got in [new.frozenptrlist.len(), new.frozenindex.len()] {
            if got != m {
                return Err(DirectoryError::BadListLength { client, got, expected: m });
            }
        }
        if new.writeptr.ts < old.writeptr.ts {
            return Err(DirectoryError::NonMonotonic {
                client,
                what: "writeptr".into(),
                from: old.writeptr.ts,
                to: new.writeptr.ts,
            });
        }
        for (p, (o, n)) in old.frozenptrlist.iter().zip(&new.frozenptrlist).enumerate() {
            if n.ts < o.ts {
                return Err(DirectoryError::NonMonotonic {
                    client,
                    what: format!("frozenptrlist[{p}]"),
                    from: o.ts,
                    to: n.ts,
                });
            }
        }
        if let Some(bad) = new.frozenptrlist.iter().find(|p| !new.writeptr.ts.is_zero() && p.ts >= new.writeptr.ts) {
            return Err(DirectoryError::FrozenNotBelowWritten {
                client,
                frozen: bad.ts,
                written: new.writeptr.ts,
            });
        }
        Ok(())
    }
}

impl Directory for SnapshotDirectory {
    fn update(&mut self, client: ClientId, update: &MetadataUpdate) -> Result<(), DirectoryError> {
        let m = self.entries.len();
        let old = self
            .entries
            .get(client as usize)
            .ok_or(DirectoryError::UnknownClient { client, m })?;
        let mut new = old.clone();
        update.apply_to(&mut new);
        self.check(client, old, &new)?;
        self.entries[client as usize] = new;
        Ok(())
    }

    fn scan(&self) -> MetadataVector {
        self.entries.clone()
    }
}
