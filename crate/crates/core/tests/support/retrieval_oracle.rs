//! Exhaustive linear-scan oracle for case retrieval and a generator of
//! random case bases with mixed attribute kinds, zones and ties.

use homectx_core::cbr::{AttrSim, Case, CaseBase, CaseBaseLayout, ProblemPair, SimilarityConfig};
use homectx_core::snapshot::{AttrKey, ContextSnapshot, SnapshotEntry};
use homectx_core::task::{AttrKind, Expected, TaskId};
use homectx_core::value::Value;
use rand::seq::SliceRandom;
use rand::Rng;

const LOCATIONS: [&str; 5] = ["Bedroom_1", "Kitchen_2", "BathRoom_30", "LivingRoom", "Garage_1"];
const WORDS: [&str; 3] = ["a", "b", "c"];
const DOM: f64 = 10.0;

pub struct Instance {
    pub base: CaseBase,
    pub cases: Vec<Case>,
    pub cfg: SimilarityConfig,
    pub snapshot: ContextSnapshot,
}

#[derive(Clone, Copy)]
enum Slot {
    Location,
    Attr(AttrKind),
}

fn sample(rng: &mut impl Rng, slot: Slot) -> Value {
    match slot {
        Slot::Location => Value::text(*LOCATIONS.choose(rng).expect("non-empty")),
        Slot::Attr(AttrKind::Categorical) => Value::text(*WORDS.choose(rng).expect("non-empty")),
        Slot::Attr(AttrKind::Boolean) => Value::Boolean(rng.gen()),
        Slot::Attr(_) => Value::number(rng.gen_range(0..=12) as f64),
    }
}

fn expected(rng: &mut impl Rng, slot: Slot) -> Expected {
    match slot {
        Slot::Attr(AttrKind::Interval) => {
            let lo = rng.gen_range(0..=8) as f64;
            Expected::interval(Value::number(lo), Value::number(lo + rng.gen_range(0..=3) as f64))
        }
        _ => Expected::Value(sample(rng, slot)),
    }
}

/// A base of at most `max_cases` cases over at most `max_attrs` attributes.
pub fn random_instance(rng: &mut impl Rng, max_cases: usize, max_attrs: usize) -> Instance {
    let layout = CaseBaseLayout::default();
    let n_attrs = rng.gen_range(1..=max_attrs);
    let kinds = [AttrKind::Numeric, AttrKind::Interval, AttrKind::Categorical, AttrKind::Boolean];
    let mut slots: Vec<(AttrKey, Slot)> = (0..n_attrs)
        .map(|j| {
            (AttrKey::new(&format!("S{}", j % 3), &format!("p{j}")), Slot::Attr(*kinds.choose(rng).expect("non-empty")))
        })
        .collect();
    if rng.gen_bool(0.6) {
        let i = rng.gen_range(0..slots.len());
        slots[i] = (AttrKey::new("User", "User_Locatedin"), Slot::Location);
    }
    let mut cfg = SimilarityConfig::default();
    for (key, slot) in &slots {
        let kind = match slot {
            Slot::Location => AttrKind::Categorical,
            Slot::Attr(k) => *k,
        };
        let dom = if matches!(kind, AttrKind::Numeric | AttrKind::Interval) { DOM } else { 1.0 };
        cfg.set(&key.to_string(), AttrSim { kind, dom, weight: rng.gen_range(1..=4) as f64 / 4.0 });
    }

    let n_cases = rng.gen_range(0..=max_cases);
    let mut cases: Vec<Case> = Vec::with_capacity(n_cases);
    for id in 1..=n_cases as u64 {
        if !cases.is_empty() && rng.gen_bool(0.15) {
            let mut twin = cases.choose(rng).expect("non-empty").clone();
            twin.case_id = id;
            twin.usedtime = rng.gen_range(0..3);
            twin.problem.shuffle(rng);
            cases.push(twin);
            continue;
        }
        let mut chosen: Vec<&(AttrKey, Slot)> = slots.iter().filter(|_| rng.gen_bool(0.8)).collect();
        if chosen.is_empty() {
            chosen.push(slots.choose(rng).expect("non-empty"));
        }
        chosen.shuffle(rng);
        let problem = chosen.iter().map(|(k, s)| ProblemPair { key: k.clone(), expected: expected(rng, *s) }).collect();
        let solution = TaskId::parse(&format!("1.{}", rng.gen_range(1..=6))).expect("valid id");
        cases.push(Case { case_id: id, problem, solution, usedtime: rng.gen_range(0..3) });
    }
    let mut base = CaseBase::new(layout);
    for c in &cases {
        base.insert(c.clone());
    }
    let mut entries: Vec<SnapshotEntry> = slots
        .iter()
        .map(|(k, s)| SnapshotEntry {
            name: k.to_string(),
            key: k.clone(),
            value: if rng.gen_bool(0.85) { Some(sample(rng, *s)) } else { None },
        })
        .collect();
    entries.shuffle(rng);
    Instance { base, cases, cfg, snapshot: ContextSnapshot::new(entries) }
}

fn oracle_distance(a: AttrSim, expected: &Expected, observed: &Value) -> f64 {
    match (a.kind, expected) {
        (AttrKind::Categorical | AttrKind::Boolean, Expected::Value(v)) => {
            if v == observed {
                0.0
            } else {
                1.0
            }
        }
        (_, e) => {
            let (lo, hi) = match e {
                Expected::Value(v) => (v.as_scalar().unwrap(), v.as_scalar().unwrap()),
                Expected::Interval { lo, hi } => (lo.as_scalar().unwrap(), hi.as_scalar().unwrap()),
            };
            let x = observed.as_scalar().expect("numeric observation");
            let gap = (lo - x).max(x - hi).max(0.0);
            (gap / a.dom).min(1.0)
        }
    }
}

fn zone(layout: &CaseBaseLayout, v: &Value) -> Option<String> {
    layout.zones.zone_of(v).map(|m| m.zone)
}

/// Scores every case the location filter admits and returns the winner's id
/// under: highest similarity (to 1e-9), then highest usedtime, then lowest id.
pub fn oracle_winner(inst: &Instance) -> Option<u64> {
    let layout = inst.base.layout();
    let observed = |key: &AttrKey| inst.snapshot.entries().iter().find(|e| &e.key == key).and_then(|e| e.value.clone());
    let snapshot_zone = layout.location_predicates.iter().find_map(|p| {
        inst.snapshot
            .entries()
            .iter()
            .find(|e| &e.key.predicate == p && e.value.is_some())
            .and_then(|e| zone(layout, e.value.as_ref()?))
    });
    let mut best: Option<(i64, u64, u64)> = None;
    for case in &inst.cases {
        if let Some(z) = &snapshot_zone {
            let case_zone = layout
                .location_predicates
                .iter()
                .find_map(|p| case.problem.iter().find(|pp| &pp.key.predicate == p))
                .and_then(|pp| match &pp.expected {
                    Expected::Value(v) => zone(layout, v),
                    Expected::Interval { .. } => None,
                });
            if case_zone.as_ref() != Some(z) {
                continue;
            }
        }
        let terms: Vec<(f64, f64)> = case
            .problem
            .iter()
            .filter_map(|p| {
                let v = observed(&p.key)?;
                let a = inst.cfg.lookup(&p.key);
                Some((a.weight, oracle_distance(a, &p.expected, &v)))
            })
            .collect();
        if terms.is_empty() || terms.len() * 2 < case.problem.len() {
            continue;
        }
        let total: f64 = terms.iter().map(|t| t.0).sum();
        let s = 1.0 - terms.iter().map(|(w, d)| w / total * d).sum::<f64>();
        let q = (s * 1e9).round() as i64;
        let better = match best {
            None => true,
            Some((bq, bu, bid)) => {
                (q, case.usedtime, std::cmp::Reverse(case.case_id)) > (bq, bu, std::cmp::Reverse(bid))
            }
        };
        if better {
            best = Some((q, case.usedtime, case.case_id));
        }
    }
    best.map(|b| b.2)
}
