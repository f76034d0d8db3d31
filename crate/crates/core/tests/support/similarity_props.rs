//! Property checks for per-attribute and weighted similarity, written as
//! plain functions so they can run under any proptest runner.

use homectx_core::cbr::{combine, local_similarity, weighted_similarity, AttrSim, ProblemPair, SimilarityConfig};
use homectx_core::snapshot::{AttrKey, ContextSnapshot, SnapshotEntry};
use homectx_core::task::{AttrKind, AttributeDescriptor, Expected};
use homectx_core::value::Value;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

/// Global similarity written out directly: `1 - sum(w_i / W * dis_i)` in input order.
pub fn oracle_similarity(terms: &[(f64, f64)]) -> f64 {
    let total: f64 = terms.iter().map(|t| t.0).sum();
    1.0 - terms.iter().map(|(w, d)| w / total * d).sum::<f64>()
}

fn descriptor(kind: AttrKind, expected: Expected, dom: f64) -> AttributeDescriptor {
    AttributeDescriptor {
        name: "a".into(),
        subject: "U".into(),
        predicate: "a".into(),
        kind,
        expected,
        dom,
        weight: None,
    }
}

pub fn local_case() -> impl Strategy<Value = (AttributeDescriptor, Value)> {
    let num = -1000.0..1000.0f64;
    let dom = 0.5..500.0f64;
    let word = prop::sample::select(vec!["On", "Off", "Bedroom_1", "x"]);
    prop_oneof![
        (num.clone(), dom.clone(), num.clone())
            .prop_map(|(e, d, o)| (descriptor(AttrKind::Numeric, Value::number(e).into(), d), Value::number(o))),
        (0.0..100.0f64, num.clone()).prop_map(|(den, o)| (
            descriptor(AttrKind::Ratio, Value::number(den.max(1.0)).into(), den.max(1.0)),
            Value::number(o)
        )),
        (num.clone(), 0.0..300.0f64, dom, num).prop_map(|(lo, width, d, o)| (
            descriptor(AttrKind::Interval, Expected::interval(Value::number(lo), Value::number(lo + width)), d),
            Value::number(o)
        )),
        (word.clone(), word)
            .prop_map(|(e, o)| (descriptor(AttrKind::Categorical, Value::text(e).into(), 1.0), Value::text(o))),
        (any::<bool>(), any::<bool>())
            .prop_map(|(e, o)| (descriptor(AttrKind::Boolean, Value::Boolean(e).into(), 1.0), Value::Boolean(o))),
    ]
}

pub fn check_local((desc, observed): (AttributeDescriptor, Value)) -> Result<(), TestCaseError> {
    let s = local_similarity(&desc, &observed).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!((0.0..=1.0).contains(&s.sim) && (0.0..=1.0).contains(&s.dis), "{s:?}");
    prop_assert!((s.sim + s.dis - 1.0).abs() < 1e-12, "{s:?}");
    Ok(())
}

/// Weighted terms, an index to worsen, how much, and a permutation seed.
pub fn combine_case() -> impl Strategy<Value = (Vec<(f64, f64)>, usize, f64, Vec<usize>)> {
    let dis = prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64];
    prop::collection::vec((0.01..1.0f64, dis), 1..=10).prop_flat_map(|terms| {
        let n = terms.len();
        (Just(terms), 0..n, 0.0..=1.0f64, Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    })
}

pub fn check_combine(
    (terms, idx, worse, perm): (Vec<(f64, f64)>, usize, f64, Vec<usize>),
) -> Result<(), TestCaseError> {
    let s = combine(&terms);
    prop_assert!((0.0..=1.0).contains(&s), "S = {s}");
    prop_assert!((s - oracle_similarity(&terms)).abs() < 1e-9, "S = {s}, oracle {}", oracle_similarity(&terms));
    let perfect = terms.iter().all(|t| t.1 == 0.0);
    prop_assert_eq!(s == 1.0, perfect, "S = {} for {:?}", s, terms);

    let mut worsened = terms.clone();
    worsened[idx].1 = terms[idx].1 + (1.0 - terms[idx].1) * worse;
    prop_assert!(combine(&worsened) <= s, "worsening term {idx} raised S");

    let permuted: Vec<(f64, f64)> = perm.iter().map(|&i| terms[i]).collect();
    prop_assert_eq!(combine(&permuted).to_bits(), s.to_bits());

    // Same invariance through case and snapshot vectors.
    let mut cfg = SimilarityConfig::default();
    let mut problem = Vec::new();
    let mut entries = Vec::new();
    for (i, (w, d)) in terms.iter().enumerate() {
        let key = AttrKey::new("S", &format!("a{i}"));
        cfg.set(&key.to_string(), AttrSim { kind: AttrKind::Numeric, dom: 1.0, weight: *w });
        problem.push(ProblemPair::new(key.clone(), Value::number(0.0)));
        entries.push(SnapshotEntry { name: key.to_string(), key, value: Some(Value::number(*d)) });
    }
    let snap = ContextSnapshot::new(entries.clone());
    let base = weighted_similarity(&problem, &snap, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let problem_p: Vec<ProblemPair> = perm.iter().map(|&i| problem[i].clone()).collect();
    let snap_p = ContextSnapshot::new(perm.iter().rev().map(|&i| entries[i].clone()).collect());
    let again = weighted_similarity(&problem_p, &snap_p, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(base.to_bits(), again.to_bits());
    prop_assert!((base - s).abs() < 1e-12);
    Ok(())
}

/// Runs both properties for `cases` trials each.
pub fn run_all(cases: u32) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new(config.clone()).run(&local_case(), check_local).map_err(|e| format!("local similarity: {e}"))?;
    TestRunner::new(config).run(&combine_case(), check_combine).map_err(|e| format!("weighted similarity: {e}"))?;
    Ok(())
}
