//! The midday bedroom reading scored against the noon-break condition.

use homectx_core::cbr::{AttrSim, ProblemPair, SimilarityConfig};
use homectx_core::snapshot::{AttrKey, ContextSnapshot, SnapshotEntry};
use homectx_core::task::{AttrKind, Expected};
use homectx_core::value::Value;

/// Bed cells 20 of 30, time 12:15 in [12:00, 13:30], door at 120 of 180
/// degrees, weighted 0.466 / 0.277 / 0.257.
pub fn noonbreak_problem() -> (Vec<ProblemPair>, ContextSnapshot, SimilarityConfig) {
    let rows = [
        (
            "User_Ni",
            "InBed_Cells",
            AttrKind::Ratio,
            Expected::from(Value::number(30.0)),
            30.0,
            0.466,
            Value::number(20.0),
        ),
        (
            "User_Ni",
            "Time",
            AttrKind::Interval,
            Expected::interval(Value::time(12, 0), Value::time(13, 30)),
            720.0,
            0.277,
            Value::time(12, 15),
        ),
        (
            "Bedroom_Door",
            "Angle",
            AttrKind::Ratio,
            Expected::from(Value::number(180.0)),
            180.0,
            0.257,
            Value::number(120.0),
        ),
    ];
    let mut cfg = SimilarityConfig::default();
    let mut problem = Vec::new();
    let mut entries = Vec::new();
    for (s, p, kind, expected, dom, weight, observed) in rows {
        let key = AttrKey::new(s, p);
        cfg.set(&key.to_string(), AttrSim { kind, dom, weight });
        problem.push(ProblemPair { key: key.clone(), expected });
        entries.push(SnapshotEntry { name: key.to_string(), key, value: Some(observed) });
    }
    (problem, ContextSnapshot::new(entries), cfg)
}
