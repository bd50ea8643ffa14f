//! Linearizability of read/write register histories with unique values.
//!
//! Each write and the reads returning its value form a group; reads of ⊥
//! belong to a virtual initial write that precedes everything. A history
//! is linearizable iff no read returns a value that was never written or
//! was written only after the read completed, and the relation "some
//! member of A responds before some member of B is invoked" is acyclic
//! over groups. A topological order of the groups, with each write placed
//! before its reads and the reads sorted by response, is a witness.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::history::{History, OpKind, Operation};
use crate::messages::OpId;

/// One real-time precedence between two groups. `from` is `None` for the
/// initial value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: Option<OpId>,
    pub to: OpId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Two operations that cannot both be ordered consistently.
    pub pair: [OpId; 2],
    pub reason: String,
    /// Shortest cycle of precedences, when the failure is a cycle.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cycle: Vec<Edge>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub linearizable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<OpId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<Violation>,
}

impl Verdict {
    fn fail(violation: Violation) -> Self {
        Verdict { linearizable: false, witness: None, violation: Some(violation) }
    }
}

const INITIAL: i64 = -1;

struct Group<'a> {
    write: Option<&'a Operation>,
    reads: Vec<&'a Operation>,
}

impl Group<'_> {
    fn response(op: &Operation) -> i64 {
        op.response.map_or(i64::MAX, |r| r as i64)
    }

    /// Member with the earliest response.
    fn first_response(&self) -> (Option<OpId>, i64) {
        let mut best = match self.write {
            Some(w) => (Some(w.id), Self::response(w)),
            None => (None, INITIAL),
        };
        for r in &self.reads {
            if Self::response(r) < best.1 {
                best = (Some(r.id), Self::response(r));
            }
        }
        best
    }

    /// Member with the latest invocation.
    fn last_invoke(&self) -> (Option<OpId>, i64) {
        let mut best = match self.write {
            Some(w) => (Some(w.id), w.invoke as i64),
            None => (None, INITIAL),
        };
        for r in &self.reads {
            if r.invoke as i64 > best.1 {
                best = (Some(r.id), r.invoke as i64);
            }
        }
        best
    }
}

pub fn check_linearizable(h: &History) -> Verdict {
    let ops = h.effective();
    let mut groups = vec![Group { write: None, reads: Vec::new() }];
    let mut by_value: BTreeMap<&[u8], usize> = BTreeMap::new();
    for op in &ops {
        if let OpKind::Write { value } = &op.kind {
            by_value.insert(value, groups.len());
            groups.push(Group { write: Some(op), reads: Vec::new() });
        }
    }
    for op in &ops {
        let OpKind::Read { value } = &op.kind else { continue };
        let g = match value {
            None => 0,
            Some(v) => match by_value.get(v.as_slice()) {
                Some(&g) => g,
                None => {
                    return Verdict::fail(Violation {
                        pair: [op.id, op.id],
                        reason: format!("read returns {} which no operation wrote", hex::encode(v)),
                        cycle: Vec::new(),
                    })
                }
            },
        };
        if let Some(w) = groups[g].write {
            if op.precedes(w) {
                return Verdict::fail(Violation {
                    pair: [op.id, w.id],
                    reason: "read returns a value whose write starts after the read ends".into(),
                    cycle: Vec::new(),
                });
            }
        }
        groups[g].reads.push(op);
    }

    let first: Vec<_> = groups.iter().map(Group::first_response).collect();
    let last: Vec<_> = groups.iter().map(Group::last_invoke).collect();
    let g = groups.len();
    let edge = |a: usize, b: usize| a != b && first[a].1 < last[b].1;

    let mut indegree = vec![0usize; g];
    for a in 0..g {
        for (b, d) in indegree.iter_mut().enumerate() {
            if edge(a, b) {
                *d += 1;
            }
        }
    }
    let mut ready: std::collections::BTreeSet<(i64, usize)> =
        (0..g).filter(|&b| indegree[b] == 0).map(|b| (first[b].1, b)).collect();
    let mut order = Vec::with_capacity(g);
    while let Some(&(key, a)) = ready.iter().next() {
        ready.remove(&(key, a));
        order.push(a);
        for b in 0..g {
            if edge(a, b) {
                indegree[b] -= 1;
                if indegree[b] == 0 {
                    ready.insert((first[b].1, b));
                }
            }
        }
    }

    if order.len() < g {
        let mut stuck = vec![true; g];
        for &a in &order {
            stuck[a] = false;
        }
        let cycle = shortest_cycle(g, &stuck, edge);
        let edges: Vec<Edge> = cycle
            .windows(2)
            .map(|w| Edge { from: first[w[0]].0, to: last[w[1]].0.expect("only the initial group lacks members") })
            .collect();
        let e = edges.iter().find(|e| e.from.is_some()).expect("a cycle has an edge from a real operation");
        return Verdict::fail(Violation {
            pair: [e.from.expect("checked"), e.to],
            reason: format!(
                "real-time order contradicts the order forced by the values read ({} groups on the cycle)",
                edges.len()
            ),
            cycle: edges,
        });
    }

    let mut witness = Vec::with_capacity(ops.len());
    for a in order {
        let grp = &mut groups[a];
        witness.extend(grp.write.map(|w| w.id));
        grp.reads.sort_by_key(|r| r.response);
        witness.extend(grp.reads.iter().map(|r| r.id));
    }
    Verdict { linearizable: true, witness: Some(witness), violation: None }
}

/// Shortest cycle through the vertices marked `stuck`, returned closed
/// (first vertex repeated at the end).
fn shortest_cycle(g: usize, stuck: &[bool], edge: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut best: Option<Vec<usize>> = None;
    for s in (0..g).filter(|&s| stuck[s]) {
        let mut parent = vec![usize::MAX; g];
        let mut queue = VecDeque::from([s]);
        let mut visited = vec![false; g];
        visited[s] = true;
        'bfs: while let Some(a) = queue.pop_front() {
            for b in (0..g).filter(|&b| stuck[b] && edge(a, b)) {
                if b == s {
                    let mut path = vec![s];
                    let mut cur = a;
                    while cur != s {
                        path.push(cur);
                        cur = parent[cur];
                    }
                    path.push(s);
                    path.reverse();
                    if best.as_ref().is_none_or(|p| path.len() < p.len()) {
                        best = Some(path);
                    }
                    break 'bfs;
                }
                if !visited[b] {
                    visited[b] = true;
                    parent[b] = a;
                    queue.push_back(b);
                }
            }
        }
    }
    best.expect("vertices left after a topological sort lie on a cycle")
}

/// Checks a witness independently: it must order exactly the operations a
/// linearization has to contain, respect real time, and satisfy the
/// sequential register specification.
pub fn replay(h: &History, witness: &[OpId]) -> Result<(), String> {
    let needed: BTreeMap<OpId, &Operation> = h.effective().into_iter().map(|o| (o.id, o)).collect();
    if witness.len() != needed.len() {
        return Err(format!("witness has {} operations, expected {}", witness.len(), needed.len()));
    }
    let mut seq = Vec::with_capacity(witness.len());
    for id in witness {
        seq.push(*needed.get(id).ok_or_else(|| format!("witness contains unexpected {id:?}"))?);
    }
    let distinct: std::collections::BTreeSet<_> = witness.iter().collect();
    if distinct.len() != witness.len() {
        return Err("witness repeats an operation".into());
    }
    for (i, a) in seq.iter().enumerate() {
        if let Some(b) = seq[i + 1..].iter().find(|b| b.precedes(a)) {
            return Err(format!("{:?} is ordered before {:?} but starts after it ends", a.id, b.id));
        }
    }
    let mut current: Option<&[u8]> = None;
    for op in seq {
        match &op.kind {
            OpKind::Write { value } => current = Some(value),
            OpKind::Read { value } => {
                if value.as_deref() != current {
                    return Err(format!("{:?} returns a value other than the latest write", op.id));
                }
            }
        }
    }
    Ok(())
}
