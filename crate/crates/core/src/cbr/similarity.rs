//! Local attribute distances and their global combinations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CbrError, ProblemPair};
use crate::snapshot::{AttrKey, ContextSnapshot};
use crate::task::{AttrKind, AttributeDescriptor, ConditionSpec, Expected};
use crate::value::Value;

pub const DEFAULT_THETA: f64 = 0.6;

/// Scoring parameters of one attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttrSim {
    pub kind: AttrKind,
    pub dom: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl Default for AttrSim {
    fn default() -> Self {
        AttrSim { kind: AttrKind::Categorical, dom: 1.0, weight: 1.0 }
    }
}

/// Per-attribute kinds, domains and raw weights plus the acceptance
/// threshold. Attributes are looked up by their full key (`subj.pred` or
/// `subj.pred[qualifier]`), then by predicate alone; anything else is
/// categorical with weight 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttrSim>,
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig { theta: DEFAULT_THETA, attributes: BTreeMap::new() }
    }
}

impl SimilarityConfig {
    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn set(&mut self, key: &str, sim: AttrSim) {
        self.attributes.insert(key.to_string(), sim);
    }

    pub fn lookup(&self, key: &AttrKey) -> AttrSim {
        self.attributes
            .get(&key.to_string())
            .or_else(|| self.attributes.get(&key.predicate))
            .copied()
            .unwrap_or_default()
    }

    /// Scoring parameters taken from a task condition; weights default to 1.
    pub fn from_condition(spec: &ConditionSpec) -> Self {
        let mut cfg = SimilarityConfig::default();
        for d in &spec.0 {
            cfg.set(
                &format!("{}.{}", d.subject, d.predicate),
                AttrSim { kind: d.kind, dom: d.dom, weight: d.weight.unwrap_or(1.0) },
            );
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), CbrError> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(CbrError::InvalidConfig(format!("theta {} outside [0,1]", self.theta)));
        }
        for (k, a) in &self.attributes {
            if !(a.dom.is_finite() && a.dom > 0.0) {
                return Err(CbrError::InvalidConfig(format!("{k}: dom must be positive")));
            }
            if !(a.weight.is_finite() && a.weight > 0.0) {
                return Err(CbrError::InvalidConfig(format!("{k}: weight must be positive")));
            }
        }
        Ok(())
    }
}

/// `sim + dis = 1`, both in `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub sim: f64,
    pub dis: f64,
}

impl Similarity {
    fn from_dis(dis: f64) -> Self {
        Similarity { sim: 1.0 - dis, dis }
    }
}

/// Normalised distance between an expected value and an observation.
///
/// Scalar kinds use the gap from the observation to the expected range (a
/// single value is the range `[v, v]`) divided by `dom` and capped at 1. For
/// `ratio` the domain is the denominator, so an expectation equal to the
/// denominator scores `observed / denominator`. Categorical and boolean
/// attributes score 0 on equality and 1 otherwise.
pub fn attr_distance(kind: AttrKind, dom: f64, expected: &Expected, observed: &Value) -> Result<f64, String> {
    match kind {
        AttrKind::Numeric | AttrKind::Ratio | AttrKind::Interval => {
            let x = observed.as_scalar().ok_or_else(|| format!("{kind} needs a number or time"))?;
            let sample = match expected {
                Expected::Value(v) => v,
                Expected::Interval { lo, .. } => lo,
            };
            if std::mem::discriminant(sample) != std::mem::discriminant(observed) {
                return Err(format!("expected {} but observed {}", sample.kind_name(), observed.kind_name()));
            }
            let (lo, hi) = expected.scalar_bounds().ok_or_else(|| format!("{kind} needs scalar bounds"))?;
            let gap = if x < lo {
                lo - x
            } else if x > hi {
                x - hi
            } else {
                0.0
            };
            Ok((gap / dom).min(1.0))
        }
        AttrKind::Categorical => match expected {
            Expected::Value(v) => Ok(if values_match(v, observed) { 0.0 } else { 1.0 }),
            Expected::Interval { .. } => Err("categorical attribute with a range".into()),
        },
        AttrKind::Boolean => match (expected, observed) {
            (Expected::Value(Value::Boolean(a)), Value::Boolean(b)) => Ok(if a == b { 0.0 } else { 1.0 }),
            _ => Err("boolean attribute needs boolean values".into()),
        },
    }
}

fn values_match(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Entity(e), Value::Text(t)) | (Value::Text(t), Value::Entity(e)) => {
            e.as_str() == t || e.local_name() == t
        }
        (Value::Number { value: x, .. }, Value::Number { value: y, .. }) => x == y,
        _ => a == b,
    }
}

pub fn local_similarity(desc: &AttributeDescriptor, observed: &Value) -> Result<Similarity, CbrError> {
    attr_distance(desc.kind, desc.dom, &desc.expected, observed)
        .map(Similarity::from_dis)
        .map_err(|reason| CbrError::KindMismatch { attr: desc.name.clone(), reason })
}

/// `1 - sum(w_j / W * dis_j)`. Terms are summed in a canonical order, so
/// the result does not depend on attribute order; a positive distance never
/// rounds up to a perfect score.
pub fn combine(terms: &[(f64, f64)]) -> f64 {
    let mut sorted: Vec<(f64, f64)> = terms.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let total_w: f64 = sorted.iter().map(|t| t.0).sum();
    if total_w <= 0.0 {
        return 0.0;
    }
    let d: f64 = sorted.iter().map(|(w, dis)| w / total_w * dis).sum();
    if d <= 0.0 {
        return 1.0;
    }
    let s = (1.0 - d).clamp(0.0, 1.0);
    if s == 1.0 {
        f64::from_bits(1f64.to_bits() - 1)
    } else {
        s
    }
}

fn observed_map(snapshot: &ContextSnapshot) -> BTreeMap<&AttrKey, &Value> {
    snapshot.present().collect()
}

/// Per-attribute distances for the attributes shared by a case and a
/// snapshot, paired with raw weights. A kind mismatch counts as distance 1.
pub fn common_terms(problem: &[ProblemPair], snapshot: &ContextSnapshot, cfg: &SimilarityConfig) -> Vec<(f64, f64)> {
    let observed = observed_map(snapshot);
    problem
        .iter()
        .filter_map(|p| {
            let v = observed.get(&p.key)?;
            let a = cfg.lookup(&p.key);
            let dis = attr_distance(a.kind, a.dom, &p.expected, v).unwrap_or(1.0);
            Some((a.weight, dis))
        })
        .collect()
}

/// Unweighted sum of distances; both sides must carry the same attributes.
pub fn manhattan_distance(
    problem: &[ProblemPair],
    snapshot: &ContextSnapshot,
    cfg: &SimilarityConfig,
) -> Result<f64, CbrError> {
    let observed = observed_map(snapshot);
    let same = problem.len() == observed.len() && problem.iter().all(|p| observed.contains_key(&p.key));
    if !same {
        return Err(CbrError::AttributeSetMismatch);
    }
    let mut total = 0.0;
    for p in problem {
        let a = cfg.lookup(&p.key);
        total += attr_distance(a.kind, a.dom, &p.expected, observed[&p.key])
            .map_err(|reason| CbrError::KindMismatch { attr: p.key.to_string(), reason })?;
    }
    Ok(total)
}

/// Weighted similarity over the attributes present on both sides, with the
/// weights renormalised to sum to one.
pub fn weighted_similarity(
    problem: &[ProblemPair],
    snapshot: &ContextSnapshot,
    cfg: &SimilarityConfig,
) -> Result<f64, CbrError> {
    let terms = common_terms(problem, snapshot, cfg);
    if terms.is_empty() {
        return Err(CbrError::NoCommonAttributes);
    }
    Ok(combine(&terms))
}
