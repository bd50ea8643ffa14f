mod common;

use awe::messages::OpId;
use awe::sim::trace::{Payload, Ret, TraceEvent};
use awe::sim::{run, EventKind};
use awe::types::Timestamp;
use awe::verify::lemmas::{check_fifo, check_frozen_selection, check_integrity, check_partial_order, op_timestamps};
use awe::verify::{check_amnesic, check_bandwidth, check_linearizable, replay, verify_trace, History, OpKind, Operation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{brute_force_linearizable, grid_scenario, random_history};

fn traces(count: u64) -> impl Iterator<Item = Vec<TraceEvent>> {
    (0..count).map(|seed| run(&grid_scenario(4, 1, 2, 3, seed)).unwrap().trace)
}

/// Rewrites a completed read to return the value of a write that another
/// write fully overwrote before the read began.
fn stale_read(trace: &[TraceEvent]) -> Option<(Vec<TraceEvent>, OpId)> {
    let h = History::from_trace(trace).ok()?;
    let writes: Vec<&Operation> = h.ops().iter().filter(|o| o.is_write() && o.is_complete()).collect();
    for r in h.ops().iter().filter(|o| !o.is_write() && o.is_complete()) {
        for old in &writes {
            let overwritten = writes.iter().any(|w| w.id != old.id && old.precedes(w) && w.precedes(r));
            let OpKind::Write { value } = &old.kind else { continue };
            if !overwritten {
                continue;
            }
            let mut t = trace.to_vec();
            for ev in &mut t {
                if let Payload::Respond { op, ret: Ret::ReadResp { value: v, .. } } = &mut ev.payload {
                    if *op == r.id {
                        *v = Some(value.clone());
                    }
                }
            }
            return Some((t, r.id));
        }
    }
    None
}

#[test]
fn stale_read_is_rejected_with_a_pair() {
    let (bad, read) = traces(20).find_map(|t| stale_read(&t)).expect("some run has an overwritten value");
    let verdict = check_linearizable(&History::from_trace(&bad).unwrap());
    assert!(!verdict.linearizable);
    let v = verdict.violation.unwrap();
    assert!(!v.cycle.is_empty());
    assert!(v.cycle.iter().any(|e| e.to == read || e.from == Some(read)), "{v:?}");
}

#[test]
fn real_witnesses_replay() {
    for t in traces(30) {
        let h = History::from_trace(&t).unwrap();
        let v = check_linearizable(&h);
        replay(&h, v.witness.as_ref().unwrap()).unwrap();
    }
}

#[test]
fn reordered_delivery_breaks_fifo() {
    let mut t = traces(1).next().unwrap();
    assert!(check_fifo(&t).is_empty());
    let delivers: Vec<usize> = (0..t.len()).filter(|&i| t[i].kind == EventKind::Deliver).collect();
    let (i, j) = delivers
        .iter()
        .flat_map(|&i| delivers.iter().map(move |&j| (i, j)))
        .find(|&(i, j)| i < j && t[i].src == t[j].src && t[i].dst == t[j].dst && t[i].payload != t[j].payload)
        .unwrap();
    let p = t[i].payload.clone();
    t[i].payload = t[j].payload.clone();
    t[j].payload = p;
    assert!(!check_fifo(&t).is_empty());
}

#[test]
fn wrong_read_timestamp_breaks_integrity() {
    let mut t = traces(1).next().unwrap();
    let h = History::from_trace(&t).unwrap();
    assert!(check_integrity(&h, &op_timestamps(&t)).is_empty());
    let ev = t
        .iter_mut()
        .find(|e| matches!(&e.payload, Payload::Respond { ret: Ret::ReadResp { value: Some(_), .. }, .. }))
        .unwrap();
    if let Payload::Respond { ret: Ret::ReadResp { ts, .. }, .. } = &mut ev.payload {
        *ts = Timestamp::new(ts.sn + 100, 0);
    }
    assert!(!check_integrity(&h, &op_timestamps(&t)).is_empty());
}

#[test]
fn write_timestamp_going_backwards_breaks_partial_order() {
    let mut t = traces(1).next().unwrap();
    let h = History::from_trace(&t).unwrap();
    assert!(check_partial_order(&h, &op_timestamps(&t)).is_empty());
    let last = t.iter_mut().rev().find(|e| matches!(&e.payload, Payload::Respond { ret: Ret::WriteAck { .. }, .. })).unwrap();
    if let Payload::Respond { ret: Ret::WriteAck { ts }, .. } = &mut last.payload {
        *ts = Timestamp::new(1, 0);
    }
    assert!(!check_partial_order(&h, &op_timestamps(&t)).is_empty());
}

#[test]
fn fake_frozen_flag_is_caught() {
    let mut t = traces(1).next().unwrap();
    let h = History::from_trace(&t).unwrap();
    let ev = t
        .iter_mut()
        .find(|e| matches!(&e.payload, Payload::Respond { ret: Ret::ReadResp { frozen: false, writer: Some(_), .. }, .. }))
        .unwrap();
    if let Payload::Respond { ret: Ret::ReadResp { frozen, .. }, .. } = &mut ev.payload {
        *frozen = true;
    }
    assert_eq!(check_frozen_selection(&t, &h, &op_timestamps(&t)).len(), 1);
}

#[test]
fn inflated_storage_exceeds_bound() {
    let mut t = traces(1).next().unwrap();
    assert!(check_amnesic(&t).within_bound());
    let ev = t.iter_mut().rev().find(|e| e.kind == EventKind::Quiescent).unwrap();
    if let Payload::Quiescent { nodes } = &mut ev.payload {
        nodes[0].honest = true;
        nodes[0].bytes += 1 << 20;
    }
    assert!(!check_amnesic(&t).within_bound());
}

#[test]
fn missing_fragment_send_is_a_bandwidth_violation() {
    let mut t = traces(1).next().unwrap();
    assert!(check_bandwidth(&t).violations.is_empty());
    let i = t
        .iter()
        .position(|e| e.kind == EventKind::Send && matches!(&e.payload, Payload::Message(env) if env.body.data_bytes() > 0))
        .unwrap();
    t.remove(i);
    assert!(!check_bandwidth(&t).violations.is_empty());
}

#[test]
fn truncated_trace_reports_starvation() {
    let t = traces(1).next().unwrap();
    let cut = t.iter().rposition(|e| e.kind == EventKind::Respond).unwrap();
    let report = verify_trace(&t[..cut]).unwrap();
    assert!(!report.wait_free);
    assert!(!report.passed());
}

#[test]
fn agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for i in 0..300 {
        let h = random_history(&mut rng, 6, 0.6);
        assert_eq!(check_linearizable(&h).linearizable, brute_force_linearizable(&h), "history {i}: {h:?}");
    }
}

#[test]
fn oracle_on_textbook_cases() {
    let id = |c, s| OpId { client: c, seq: s };
    let ok = History::new(vec![
        Operation::write(id(0, 0), vec![1], 0, Some(1)),
        Operation::read(id(1, 0), Some(vec![1]), 2, Some(3)),
    ])
    .unwrap();
    assert!(brute_force_linearizable(&ok));
    let stale = History::new(vec![
        Operation::write(id(0, 0), vec![1], 0, Some(1)),
        Operation::write(id(0, 1), vec![2], 2, Some(3)),
        Operation::read(id(1, 0), Some(vec![1]), 4, Some(5)),
    ])
    .unwrap();
    assert!(!brute_force_linearizable(&stale));
}
