//! Byzantine node behaviours and the adversary description.
//!
//! Strategies are drawn from a fixed menu. Every random choice a faulty
//! node makes is a pure function of the adversary seed, the node index and
//! the number of events the node has handled so far.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::messages::{NodeRequest, NodeResponse};
use crate::node::DataNode;
use crate::types::{ClientId, Fragment, NodeId, Timestamp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeStrategy {
    /// Never responds to anything.
    Silent,
    /// Stores honestly but flips bits in every fragment it returns.
    CorruptFragment,
    /// Answers with a timestamp different from the one asked about.
    WrongTimestamp,
    /// Acknowledges writes without storing; reads find nothing.
    AckWithoutStore,
    /// Stores honestly but erases fragments at random.
    SpuriousFree,
    /// Keeps everything and answers reads with older fragments.
    StaleReplay,
}

impl NodeStrategy {
    pub const ALL: [NodeStrategy; 6] = [
        NodeStrategy::Silent,
        NodeStrategy::CorruptFragment,
        NodeStrategy::WrongTimestamp,
        NodeStrategy::AckWithoutStore,
        NodeStrategy::SpuriousFree,
        NodeStrategy::StaleReplay,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByzantineNode {
    pub id: NodeId,
    pub strategy: NodeStrategy,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarySpec {
    #[serde(default)]
    pub nodes: Vec<ByzantineNode>,
    /// Client id -> scheduler step at which the client halts.
    #[serde(default, deserialize_with = "crash_map")]
    pub client_crashes: BTreeMap<ClientId, u64>,
    #[serde(default)]
    pub seed: u64,
}

/// JSON object keys are strings; once buffered inside a tagged enum they
/// are no longer coerced to integers, so parse them here.
fn crash_map<'de, D: serde::Deserializer<'de>>(d: D) -> Result<BTreeMap<ClientId, u64>, D::Error> {
    BTreeMap::<String, u64>::deserialize(d)?
        .into_iter()
        .map(|(k, v)| k.parse().map(|c| (c, v)).map_err(serde::de::Error::custom))
        .collect()
}

impl AdversarySpec {
    pub fn strategy_of(&self, node: NodeId) -> Option<NodeStrategy> {
        self.nodes.iter().find(|b| b.id == node).map(|b| b.strategy)
    }

    pub fn is_byzantine(&self, node: NodeId) -> bool {
        self.strategy_of(node).is_some()
    }
}

/// A data node under simulation: honest, or honest storage wrapped by a
/// Byzantine strategy.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SimNode {
    index: NodeId,
    store: DataNode,
    behaviour: Option<Byzantine>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Byzantine {
    strategy: NodeStrategy,
    seed: u64,
    events: u64,
}

impl Byzantine {
    fn rng(&mut self, index: NodeId) -> rand_chacha::ChaCha8Rng {
        self.events += 1;
        let mix = self.seed ^ (index as u64).rotate_left(32) ^ self.events.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        rand_chacha::ChaCha8Rng::seed_from_u64(mix)
    }
}

pub fn honest_node(index: NodeId) -> SimNode {
    SimNode { index, store: DataNode::new(), behaviour: None }
}

/// Wraps honest storage with a faulty behaviour.
pub fn wrap_node(index: NodeId, store: DataNode, strategy: NodeStrategy, seed: u64) -> SimNode {
    SimNode { index, store, behaviour: Some(Byzantine { strategy, seed, events: 0 }) }
}

fn shifted(ts: Timestamp) -> Timestamp {
    Timestamp { sn: ts.sn + 1, client: ts.client }
}

impl SimNode {
    pub fn index(&self) -> NodeId {
        self.index
    }

    pub fn is_honest(&self) -> bool {
        self.behaviour.is_none()
    }

    pub fn strategy(&self) -> Option<NodeStrategy> {
        self.behaviour.as_ref().map(|b| b.strategy)
    }

    pub fn store(&self) -> &DataNode {
        &self.store
    }

    /// Handles one request, returning zero or more responses.
    pub fn handle(&mut self, req: NodeRequest) -> Vec<NodeResponse> {
        let index = self.index;
        let Some(byz) = self.behaviour.as_mut() else {
            return vec![self.store.handle(req)];
        };
        let mut rng = byz.rng(index);
        match byz.strategy {
            NodeStrategy::Silent => Vec::new(),
            NodeStrategy::CorruptFragment => match self.store.handle(req) {
                NodeResponse::ReadResp { ts, frag } => {
                    let frag = frag.map(|mut f| {
                        if f.is_empty() {
                            f.0.push(0);
                        } else {
                            let pos = rng.gen_range(0..f.len());
                            f.0[pos] ^= rng.gen_range(1..=255u8);
                        }
                        f
                    });
                    vec![NodeResponse::ReadResp { ts, frag }]
                }
                other => vec![other],
            },
            NodeStrategy::WrongTimestamp => match self.store.handle(req) {
                NodeResponse::WriteAck { ts } => vec![NodeResponse::WriteAck { ts: shifted(ts) }],
                NodeResponse::ReadResp { ts, frag } => vec![NodeResponse::ReadResp { ts: shifted(ts), frag }],
                other => vec![other],
            },
            NodeStrategy::AckWithoutStore => match req {
                NodeRequest::Write { ts, .. } => vec![NodeResponse::WriteAck { ts }],
                NodeRequest::Read { ts } => vec![NodeResponse::ReadResp { ts, frag: None }],
                NodeRequest::Free { ts_set } => vec![NodeResponse::FreeAck { ts_set }],
            },
            NodeStrategy::SpuriousFree => {
                if !self.store.is_empty() && rng.gen_bool(0.5) {
                    let victims: Vec<Timestamp> = self.store.timestamps().collect();
                    let victim = victims[rng.gen_range(0..victims.len())];
                    self.store.free(&[victim]);
                }
                vec![self.store.handle(req)]
            }
            NodeStrategy::StaleReplay => match req {
                NodeRequest::Free { ts_set } => vec![NodeResponse::FreeAck { ts_set }],
                NodeRequest::Read { ts } => {
                    let older: Vec<Timestamp> = self.store.timestamps().filter(|s| *s < ts).collect();
                    if older.is_empty() {
                        return vec![self.store.handle(NodeRequest::Read { ts })];
                    }
                    let old = older[rng.gen_range(0..older.len())];
                    let frag: Option<Fragment> = self.store.read(old).1;
                    // either an honest-looking label on old data, or the old label itself
                    let label = if rng.gen_bool(0.5) { ts } else { old };
                    vec![NodeResponse::ReadResp { ts: label, frag }]
                }
                write => vec![self.store.handle(write)],
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn byz(strategy: NodeStrategy) -> SimNode {
        wrap_node(0, DataNode::new(), strategy, 42)
    }

    fn write(ts: Timestamp) -> NodeRequest {
        NodeRequest::Write { ts, frag: Fragment(vec![1, 2, 3]) }
    }

    #[test]
    fn silent_never_answers() {
        let mut n = byz(NodeStrategy::Silent);
        let ts = Timestamp::new(1, 0);
        assert!(n.handle(write(ts)).is_empty());
        assert!(n.handle(NodeRequest::Read { ts }).is_empty());
    }

    #[test]
    fn corrupt_fragment_changes_bytes() {
        let mut n = byz(NodeStrategy::CorruptFragment);
        let ts = Timestamp::new(1, 0);
        n.handle(write(ts));
        let resp = n.handle(NodeRequest::Read { ts });
        let NodeResponse::ReadResp { frag: Some(f), .. } = &resp[0] else { panic!("{resp:?}") };
        assert_ne!(f.0, vec![1, 2, 3]);
    }

    #[test]
    fn wrong_timestamp_shifts_labels() {
        let mut n = byz(NodeStrategy::WrongTimestamp);
        let ts = Timestamp::new(1, 0);
        assert_eq!(n.handle(write(ts)), vec![NodeResponse::WriteAck { ts: Timestamp::new(2, 0) }]);
    }

    #[test]
    fn ack_without_store_reads_absent() {
        let mut n = byz(NodeStrategy::AckWithoutStore);
        let ts = Timestamp::new(1, 0);
        assert_eq!(n.handle(write(ts)), vec![NodeResponse::WriteAck { ts }]);
        assert_eq!(n.handle(NodeRequest::Read { ts }), vec![NodeResponse::ReadResp { ts, frag: None }]);
        assert!(n.store().is_empty());
    }

    #[test]
    fn stale_replay_keeps_and_replays_old_data() {
        let mut n = byz(NodeStrategy::StaleReplay);
        let (a, b) = (Timestamp::new(1, 0), Timestamp::new(2, 0));
        n.handle(write(a));
        n.handle(NodeRequest::Write { ts: b, frag: Fragment(vec![9, 9, 9]) });
        n.handle(NodeRequest::Free { ts_set: vec![a] });
        assert!(n.store().holds(a));
        let resp = n.handle(NodeRequest::Read { ts: b });
        let NodeResponse::ReadResp { frag: Some(f), .. } = &resp[0] else { panic!() };
        assert_eq!(f.0, vec![1, 2, 3]);
    }

    #[test]
    fn spurious_free_eventually_erases() {
        let mut n = byz(NodeStrategy::SpuriousFree);
        let ts = Timestamp::new(1, 0);
        n.handle(write(ts));
        let mut erased = false;
        for _ in 0..64 {
            if let NodeResponse::ReadResp { frag: None, .. } = n.handle(NodeRequest::Read { ts })[0] {
                erased = true;
                break;
            }
        }
        assert!(erased);
    }

    #[test]
    fn strategies_are_deterministic() {
        let run = || {
            let mut n = byz(NodeStrategy::CorruptFragment);
            let ts = Timestamp::new(1, 0);
            n.handle(write(ts));
            (0..10).map(|_| n.handle(NodeRequest::Read { ts })).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adversary_spec_json() {
        let spec: AdversarySpec = serde_json::from_str(
            r#"{"nodes":[{"id":2,"strategy":"ack-without-store"}],"client_crashes":{"1":40},"seed":3}"#,
        )
        .unwrap();
        assert_eq!(spec.strategy_of(2), Some(NodeStrategy::AckWithoutStore));
        assert!(!spec.is_byzantine(0));
        assert_eq!(spec.client_crashes[&1], 40);
    }
}
