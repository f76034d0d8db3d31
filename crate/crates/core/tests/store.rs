use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use homectx_core::bus::Bus;
use homectx_core::clock::{Stamp, VirtualClock};
use homectx_core::store::{ContextStore, ProviderId, ProviderKind, Triple, TriplePattern};
use homectx_core::value::Value;
use proptest::prelude::*;

const SUBJECTS: [&str; 3] = ["User_A", "Room_1", "Lamp"];
const PREDICATES: [&str; 3] = ["state", "level", "HasDevice"];
const OBJECTS: [&str; 4] = ["On", "Off", "Dim", "Lamp-2"];
const PROVIDERS: [&str; 3] = ["p0", "p1", "p2"];

#[derive(Debug, Clone)]
enum Op {
    Assert { s: usize, p: usize, o: usize, prov: usize },
    Retract { s: Option<usize>, p: Option<usize> },
    Leave(usize),
    Join(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        6 => (0..3usize, 0..3usize, 0..4usize, 0..3usize).prop_map(|(s, p, o, prov)| Op::Assert { s, p, o, prov }),
        1 => (prop::option::of(0..3usize), prop::option::of(0..3usize)).prop_map(|(s, p)| Op::Retract { s, p }),
        1 => (0..3usize).prop_map(Op::Leave),
        1 => (0..3usize).prop_map(Op::Join),
    ]
}

fn provider(i: usize) -> ProviderId {
    ProviderId::new(PROVIDERS[i], ProviderKind::HardwareSim)
}

struct Harness {
    store: ContextStore,
    notes: Arc<AtomicUsize>,
    _bus: Bus,
}

fn harness() -> Harness {
    let bus = Bus::new(VirtualClock::default());
    let notes = Arc::new(AtomicUsize::new(0));
    let n = Arc::clone(&notes);
    bus.subscribe("context/*", move |_| {
        n.fetch_add(1, Ordering::SeqCst);
    })
    .unwrap();
    let multi: BTreeSet<String> = ["HasDevice".to_string()].into();
    let store = ContextStore::with_multi_valued(bus.clone(), multi);
    for i in 0..PROVIDERS.len() {
        store.provider_join(provider(i)).unwrap();
    }
    Harness { store, notes, _bus: bus }
}

/// Applies one op; returns how many changes it made.
fn apply(store: &ContextStore, op: &Op, step: u64) -> usize {
    match op {
        Op::Assert { s, p, o, prov } => {
            let t = Triple::new(SUBJECTS[*s], PREDICATES[*p], Value::text(OBJECTS[*o]), &provider(*prov), Stamp(step));
            match store.assert_triple(t) {
                Ok(d) if !d.is_noop() => 1,
                _ => 0,
            }
        }
        Op::Retract { s, p } => match TriplePattern::new(s.map(|i| SUBJECTS[i]), p.map(|i| PREDICATES[i]), None) {
            Ok(pattern) => store.retract(&pattern).len(),
            Err(_) => 0,
        },
        Op::Leave(i) => store.provider_leave(PROVIDERS[*i]).unwrap_or(0),
        Op::Join(i) => {
            let _ = store.provider_join(provider(*i));
            0
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 512, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn store_invariants_hold(ops in prop::collection::vec(op(), 1..60)) {
        let h = harness();
        let mut changes = 0;
        for (i, op) in ops.iter().enumerate() {
            changes += apply(&h.store, op, i as u64);
            prop_assert_eq!(h.notes.load(Ordering::SeqCst), changes, "one notification per change");

            let mut per_key: BTreeMap<(String, String), usize> = BTreeMap::new();
            for t in h.store.all_triples().iter().filter(|t| t.predicate != "HasDevice") {
                *per_key.entry((t.subject.as_str().to_string(), t.predicate.clone())).or_default() += 1;
            }
            prop_assert!(per_key.values().all(|&n| n == 1), "functional predicates hold one value");

            if let Op::Leave(p) = op {
                prop_assert!(h.store.all_triples().iter().all(|t| t.provider.id != PROVIDERS[*p]));
                for s in SUBJECTS {
                    let q = TriplePattern::new(Some(s), None, None).unwrap();
                    prop_assert!(h.store.query_pattern(&q).iter().all(|t| t.provider.id != PROVIDERS[*p]));
                }
            }
        }

        let replay = harness();
        for (i, op) in ops.iter().enumerate() {
            apply(&replay.store, op, i as u64);
        }
        prop_assert_eq!(replay.store.all_triples(), h.store.all_triples());

        let mut dump = Vec::new();
        h.store.dump_csv(&mut dump).unwrap();
        let loaded = ContextStore::new(Bus::new(VirtualClock::default()));
        loaded.load_csv(dump.as_slice()).unwrap();
        let key = |t: &Triple| (t.subject.as_str().to_string(), t.predicate.clone(), t.object.to_string());
        let mut a: Vec<_> = loaded.all_triples().iter().map(key).collect();
        let mut b: Vec<_> = h.store.all_triples().iter().map(key).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }
}
