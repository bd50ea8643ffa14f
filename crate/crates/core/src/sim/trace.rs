//! Trace events and their JSON-lines encoding.
//!
//! Every line is one object with the fields
//!
//! * `step`: scheduler step at which the event happened,
//! * `kind`: one of `begin`, `invoke`, `send`, `deliver`,
//!   `dir-atomicity-point`, `respond`, `crash`, `quiescent`, `end`,
//! * `src`, `dst`: component names, `harness`, `dir`, `client:<id>` or
//!   `node:<index>`,
//! * `payload`: an object tagged by `type` (see [`Payload`]).
//!
//! The first line is always `begin` (carrying the system configuration and
//! adversary) and the last is `end`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::ReadSource;
use crate::fault::AdversarySpec;
use crate::messages::{DirRequest, DirResponse, Envelope, OpId};
use crate::types::{hex_bytes, hex_bytes_opt, ClientId, NodeId, SystemConfig, Timestamp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Harness,
    Dir,
    Client(ClientId),
    Node(NodeId),
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Harness => f.write_str("harness"),
            Component::Dir => f.write_str("dir"),
            Component::Client(c) => write!(f, "client:{c}"),
            Component::Node(i) => write!(f, "node:{i}"),
        }
    }
}

impl FromStr for Component {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "harness" => return Ok(Component::Harness),
            "dir" => return Ok(Component::Dir),
            _ => {}
        }
        let (kind, id) = s.split_once(':').ok_or_else(|| format!("bad component `{s}`"))?;
        match kind {
            "client" => id.parse().map(Component::Client).map_err(|e| format!("{s}: {e}")),
            "node" => id.parse().map(Component::Node).map_err(|e| format!("{s}: {e}")),
            _ => Err(format!("bad component `{s}`")),
        }
    }
}

impl Serialize for Component {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Component {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Begin,
    Invoke,
    Send,
    Deliver,
    DirAtomicityPoint,
    Respond,
    Crash,
    Quiescent,
    End,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Call {
    Write {
        #[serde(with = "hex_bytes")]
        value: Vec<u8>,
    },
    Read,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Ret {
    WriteAck {
        ts: Timestamp,
    },
    ReadResp {
        #[serde(with = "hex_bytes_opt")]
        value: Option<Vec<u8>>,
        ts: Timestamp,
        /// Writer whose entry supplied the pointer, if any.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        writer: Option<ClientId>,
        /// Whether the pointer was a frozen one.
        #[serde(default)]
        frozen: bool,
    },
}

impl Ret {
    pub fn read(value: Option<Vec<u8>>, ts: Timestamp, source: Option<ReadSource>) -> Self {
        Ret::ReadResp {
            value,
            ts,
            writer: source.map(|s| s.writer),
            frozen: source.is_some_and(|s| s.frozen),
        }
    }
}

/// Stored fragments at one node at a quiescent point.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeUsage {
    pub node: NodeId,
    pub honest: bool,
    pub fragments: usize,
    pub bytes: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunSummary {
    /// Non-crashed clients left with an unfinished operation or script.
    pub starved: Vec<StarvedClient>,
    pub step_limit_hit: bool,
    /// Invariant violations detected online by the harness.
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StarvedClient {
    pub client: ClientId,
    /// `write`, `read` or `idle` (script unfinished but nothing in flight).
    pub pending: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Begin { config: SystemConfig, adversary: AdversarySpec, seed: u64 },
    Invoke { op: OpId, call: Call },
    Respond { op: OpId, ret: Ret },
    Message(Envelope),
    DirOp { op: OpId, request: DirRequest, response: DirResponse },
    Crash { client: ClientId },
    Quiescent { nodes: Vec<NodeUsage> },
    End(RunSummary),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u64,
    pub kind: EventKind,
    pub src: Component,
    pub dst: Component,
    pub payload: Payload,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_jsonl(events: &[TraceEvent], mut out: impl Write) -> Result<(), TraceError> {
    for ev in events {
        serde_json::to_writer(&mut out, ev).map_err(|e| TraceError::Parse { line: 0, source: e })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl_string(events: &[TraceEvent]) -> String {
    let mut buf = Vec::new();
    write_jsonl(events, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("json is utf-8")
}

/// Parses a JSON-lines trace; blank lines are skipped.
pub fn read_jsonl(input: impl BufRead) -> Result<Vec<TraceEvent>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| TraceError::Parse { line: i + 1, source: e })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_names_round_trip() {
        for c in [Component::Harness, Component::Dir, Component::Client(3), Component::Node(12)] {
            assert_eq!(c.to_string().parse::<Component>().unwrap(), c);
        }
        assert!("nodes:1".parse::<Component>().is_err());
        assert!("client:x".parse::<Component>().is_err());
    }

    #[test]
    fn event_line_shape() {
        let ev = TraceEvent {
            step: 4,
            kind: EventKind::Invoke,
            src: Component::Harness,
            dst: Component::Client(1),
            payload: Payload::Invoke { op: OpId { client: 1, seq: 0 }, call: Call::Write { value: vec![0xAB] } },
        };
        let line = serde_json::to_string(&ev).unwrap();
        assert_eq!(
            line,
            r#"{"step":4,"kind":"invoke","src":"harness","dst":"client:1","payload":{"type":"invoke","op":{"client":1,"seq":0},"call":{"op":"write","value":"ab"}}}"#
        );
        let back = read_jsonl(format!("{line}\n\n").as_bytes()).unwrap();
        assert_eq!(back, vec![ev]);
    }

    #[test]
    fn parse_error_reports_line() {
        let err = read_jsonl("{}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 1, .. }));
    }
}
