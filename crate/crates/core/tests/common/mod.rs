#![allow(dead_code)]

use awe::fault::{ByzantineNode, NodeStrategy};
use awe::messages::OpId;
use awe::sim::Scenario;
use awe::types::SystemConfig;
use awe::verify::{History, OpKind, Operation};
use rand::seq::SliceRandom;
use rand::Rng;

/// Decides linearizability by trying every subset of pending writes and
/// every permutation of the operations. Shares nothing with the checker.
pub fn brute_force_linearizable(h: &History) -> bool {
    let done: Vec<&Operation> = h.ops().iter().filter(|o| o.response.is_some()).collect();
    let pending_writes: Vec<&Operation> =
        h.ops().iter().filter(|o| o.response.is_none() && matches!(o.kind, OpKind::Write { .. })).collect();
    (0..1u32 << pending_writes.len()).any(|mask| {
        let mut ops = done.clone();
        ops.extend(pending_writes.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, o)| *o));
        let mut idx: Vec<usize> = (0..ops.len()).collect();
        permutations(&mut idx, 0, &mut |perm| legal(&ops, perm))
    })
}

fn permutations(idx: &mut Vec<usize>, from: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    if from == idx.len() {
        return f(idx);
    }
    for i in from..idx.len() {
        idx.swap(from, i);
        if permutations(idx, from + 1, f) {
            idx.swap(from, i);
            return true;
        }
        idx.swap(from, i);
    }
    false
}

fn legal(ops: &[&Operation], perm: &[usize]) -> bool {
    for (i, &a) in perm.iter().enumerate() {
        for &b in &perm[i + 1..] {
            // b placed after a, so b must not end before a starts
            if ops[b].response.is_some_and(|r| r < ops[a].invoke) {
                return false;
            }
        }
    }
    let mut reg: Option<&Vec<u8>> = None;
    for &i in perm {
        match &ops[i].kind {
            OpKind::Write { value } => reg = Some(value),
            OpKind::Read { value } => {
                if value.as_ref() != reg {
                    return false;
                }
            }
        }
    }
    true
}

/// A random well-formed history of at most `max_ops` operations on up to
/// three clients. It is generated linearizable (each operation takes
/// effect at a random instant inside its interval); with probability
/// `corrupt` one read's result is then replaced.
pub fn random_history(rng: &mut impl Rng, max_ops: usize, corrupt: f64) -> History {
    #[derive(Clone, Copy, PartialEq)]
    enum St {
        Idle,
        Invoked,
        Applied,
        Stopped,
    }
    let clients = rng.gen_range(1..=3u16);
    let total = rng.gen_range(1..=max_ops);
    let mut remaining = vec![0usize; clients as usize];
    for _ in 0..total {
        remaining[rng.gen_range(0..clients as usize)] += 1;
    }
    let mut state = vec![St::Idle; clients as usize];
    let mut current: Vec<Option<Operation>> = vec![None; clients as usize];
    let mut seq = vec![0u32; clients as usize];
    let mut ops = Vec::new();
    let mut reg: Option<Vec<u8>> = None;
    let mut clock = 0u64;
    let mut next_value = 1u8;
    loop {
        let live: Vec<usize> = (0..clients as usize)
            .filter(|&c| state[c] != St::Stopped && (state[c] != St::Idle || remaining[c] > 0))
            .collect();
        let Some(&c) = live.choose(rng) else { break };
        match state[c] {
            St::Idle => {
                remaining[c] -= 1;
                let id = OpId { client: c as u16, seq: seq[c] };
                seq[c] += 1;
                let op = if rng.gen_bool(0.5) {
                    next_value += 1;
                    Operation::write(id, vec![next_value], clock, None)
                } else {
                    Operation::read(id, None, clock, None)
                };
                clock += 1;
                current[c] = Some(op);
                state[c] = St::Invoked;
            }
            St::Invoked => {
                if remaining[c] == 0 && rng.gen_bool(0.1) {
                    // crash before the operation takes effect
                    state[c] = St::Stopped;
                    continue;
                }
                let op = current[c].as_mut().unwrap();
                match &mut op.kind {
                    OpKind::Write { value } => reg = Some(value.clone()),
                    OpKind::Read { value } => *value = reg.clone(),
                }
                state[c] = St::Applied;
            }
            St::Applied => {
                let mut op = current[c].take().unwrap();
                if remaining[c] == 0 && rng.gen_bool(0.15) {
                    // crash: the operation stays pending; a pending read
                    // carries no result
                    if let OpKind::Read { value } = &mut op.kind {
                        *value = None;
                    }
                    ops.push(op);
                    state[c] = St::Stopped;
                    continue;
                }
                op.response = Some(clock);
                clock += 1;
                ops.push(op);
                state[c] = St::Idle;
            }
            St::Stopped => unreachable!(),
        }
    }
    ops.extend(current.into_iter().flatten());
    if rng.gen_bool(corrupt) {
        let written: Vec<Vec<u8>> = ops
            .iter()
            .filter_map(|o| match &o.kind {
                OpKind::Write { value } => Some(value.clone()),
                _ => None,
            })
            .collect();
        let reads: Vec<usize> = (0..ops.len())
            .filter(|&i| ops[i].response.is_some() && matches!(ops[i].kind, OpKind::Read { .. }))
            .collect();
        if let Some(&i) = reads.choose(rng) {
            let choice = match rng.gen_range(0..3) {
                0 => None,
                1 => written.choose(rng).cloned(),
                _ => Some(vec![0xEE]),
            };
            ops[i].kind = OpKind::Read { value: choice };
        }
    }
    History::new(ops).expect("generator produces well-formed histories")
}

/// Grid configuration used by the randomized atomicity runs: `t` faulty
/// nodes with the strategy selected by the seed, an occasional client
/// crash, and between 20 and 60 operations in total.
pub fn grid_scenario(n: usize, t: usize, k: usize, m: usize, seed: u64) -> Scenario {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_0000);
    let mut s = Scenario::new(SystemConfig::new(n, t, k, m, 24));
    let strategy = NodeStrategy::ALL[(seed % NodeStrategy::ALL.len() as u64) as usize];
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    s.adversary.nodes = ids[..t].iter().map(|&id| ByzantineNode { id, strategy }).collect();
    s.workload.ops = rng.gen_range(20usize.div_ceil(m)..=60 / m);
    s.workload.mix = rng.gen_range(0.2..0.8);
    if seed.is_multiple_of(4) {
        let c = rng.gen_range(0..m as u16);
        s.adversary.client_crashes.insert(c, rng.gen_range(0..400));
    }
    s.with_seed(seed)
}

pub const GRID: [(usize, usize, usize); 4] = [(3, 1, 1), (4, 1, 2), (5, 2, 1), (7, 2, 3)];
