//! Zone-partitioned case base and retrieval.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use super::similarity::{combine, common_terms, SimilarityConfig};
use super::{represent_case, Case, CbrError, ProblemPair};
use crate::snapshot::{AttrKey, ContextSnapshot};
use crate::store::DEFAULT_MULTI_VALUED;
use crate::task::{Expected, TaskId, TaskKind, TaskLibrary};
use crate::zone::ZoneMap;

/// Partition for cases without a recognisable location.
pub const UNZONED: &str = "Unzoned";

/// How cases map onto partitions and how persisted keys are rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseBaseLayout {
    #[serde(default)]
    pub zones: ZoneMap,
    #[serde(default = "default_location_predicates")]
    pub location_predicates: Vec<String>,
    #[serde(default = "default_multi_valued")]
    pub multi_valued: BTreeSet<String>,
}

fn default_location_predicates() -> Vec<String> {
    ["User_Locatedin", "Location", "locatedIn"].iter().map(|s| s.to_string()).collect()
}

fn default_multi_valued() -> BTreeSet<String> {
    DEFAULT_MULTI_VALUED.iter().map(|s| s.to_string()).collect()
}

impl Default for CaseBaseLayout {
    fn default() -> Self {
        CaseBaseLayout {
            zones: ZoneMap::default(),
            location_predicates: default_location_predicates(),
            multi_valued: default_multi_valued(),
        }
    }
}

impl CaseBaseLayout {
    fn zone_of_value(&self, v: &crate::value::Value) -> Option<String> {
        let m = self.zones.zone_of(v)?;
        if !m.known {
            warn!("location {v} is outside the configured zones; using zone {}", m.zone);
        }
        Some(m.zone)
    }

    /// Partition key of a case.
    pub fn case_zone(&self, case: &Case) -> String {
        self.location_predicates
            .iter()
            .find_map(|lp| {
                case.problem.iter().find(|p| &p.key.predicate == lp).and_then(|p| match &p.expected {
                    Expected::Value(v) => self.zone_of_value(v),
                    Expected::Interval { .. } => None,
                })
            })
            .unwrap_or_else(|| UNZONED.to_string())
    }

    /// Zone of the user in a snapshot, if it has a usable location.
    pub fn snapshot_zone(&self, snapshot: &ContextSnapshot) -> Option<String> {
        snapshot.find_by_predicate(&self.location_predicates).and_then(|v| self.zone_of_value(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    pub case_id: u64,
    pub task: TaskId,
    pub similarity: f64,
    pub usedtime: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub ranked: Vec<Ranked>,
    pub accepted: bool,
    /// Partition that was searched; `None` means all of them.
    pub zone: Option<String>,
}

impl MatchResult {
    pub fn best(&self) -> Option<&Ranked> {
        self.ranked.first()
    }

    /// Accepted solution, if any.
    pub fn solution(&self) -> Option<&TaskId> {
        self.accepted.then(|| self.best().map(|r| &r.task)).flatten()
    }
}

/// Ranking order: similarity (to 1e-9) descending, then usage count
/// descending, then case id ascending.
pub fn rank_order(a: &Ranked, b: &Ranked) -> Ordering {
    let q = |s: f64| (s * 1e9).round() as i64;
    q(b.similarity).cmp(&q(a.similarity)).then(b.usedtime.cmp(&a.usedtime)).then(a.case_id.cmp(&b.case_id))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CaseBase {
    partitions: BTreeMap<String, Vec<Case>>,
    layout: CaseBaseLayout,
}

impl CaseBase {
    pub fn new(layout: CaseBaseLayout) -> Self {
        CaseBase { partitions: BTreeMap::new(), layout }
    }

    pub fn layout(&self) -> &CaseBaseLayout {
        &self.layout
    }

    pub fn partitions(&self) -> &BTreeMap<String, Vec<Case>> {
        &self.partitions
    }

    pub fn len(&self) -> usize {
        self.partitions.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All cases ordered by id.
    pub fn cases(&self) -> Vec<&Case> {
        let mut all: Vec<&Case> = self.partitions.values().flatten().collect();
        all.sort_by_key(|c| c.case_id);
        all
    }

    pub fn get(&self, case_id: u64) -> Option<&Case> {
        self.partitions.values().flatten().find(|c| c.case_id == case_id)
    }

    pub fn next_id(&self) -> u64 {
        self.partitions.values().flatten().map(|c| c.case_id).max().unwrap_or(0) + 1
    }

    /// Adds a case to its partition, keeping partitions ordered by id.
    pub fn insert(&mut self, case: Case) {
        let zone = self.layout.case_zone(&case);
        if zone != UNZONED && !self.partitions.contains_key(&zone) {
            let configured = self.layout.zones.zones().len();
            let zoned = self.partitions.keys().filter(|k| *k != UNZONED).count();
            if zoned >= configured {
                warn!("case base grows to {} zones, more than the {configured} configured", zoned + 1);
            }
        }
        let part = self.partitions.entry(zone).or_default();
        let pos = part.partition_point(|c| c.case_id < case.case_id);
        part.insert(pos, case);
    }

    /// Scores the partition of the snapshot's zone (every partition when the
    /// snapshot has no location). Cases with fewer than half of their
    /// attributes observable are skipped.
    pub fn rank(&self, snapshot: &ContextSnapshot, cfg: &SimilarityConfig) -> MatchResult {
        let zone = self.layout.snapshot_zone(snapshot);
        let candidates: Vec<&Case> = match &zone {
            Some(z) => self.partitions.get(z).map(|v| v.iter().collect()).unwrap_or_default(),
            None => self.partitions.values().flatten().collect(),
        };
        let mut ranked: Vec<Ranked> = candidates
            .into_iter()
            .filter_map(|c| {
                let terms = common_terms(&c.problem, snapshot, cfg);
                if terms.is_empty() || terms.len() * 2 < c.problem.len() {
                    return None;
                }
                Some(Ranked {
                    case_id: c.case_id,
                    task: c.solution.clone(),
                    similarity: combine(&terms),
                    usedtime: c.usedtime,
                })
            })
            .collect();
        ranked.sort_by(rank_order);
        let accepted = ranked.first().is_some_and(|r| r.similarity >= cfg.theta);
        MatchResult { ranked, accepted, zone }
    }

    /// Ranks and, when the best case is accepted, bumps its usage count.
    pub fn retrieve_best(&mut self, snapshot: &ContextSnapshot, cfg: &SimilarityConfig) -> MatchResult {
        let result = self.rank(snapshot, cfg);
        if result.accepted {
            let id = result.ranked[0].case_id;
            if let Some(c) = self.partitions.values_mut().flatten().find(|c| c.case_id == id) {
                c.usedtime += 1;
            }
        }
        result
    }

    /// Stores the snapshot as a new case solved by `confirmed`.
    pub fn learn_case(&mut self, snapshot: &ContextSnapshot, confirmed: TaskId) -> Result<u64, CbrError> {
        let case = represent_case(snapshot, confirmed, self.next_id())?;
        if let Some(dup) = self.partitions.values().flatten().find(|c| c.same_content(&case)) {
            return Err(CbrError::DuplicateExactCase(dup.case_id));
        }
        let id = case.case_id;
        self.insert(case);
        Ok(id)
    }

    /// One template case per atomic task with a non-empty condition, built
    /// from the task's inherited condition, together with the matching
    /// similarity settings.
    pub fn from_library(lib: &TaskLibrary, layout: CaseBaseLayout) -> (CaseBase, SimilarityConfig) {
        let mut base = CaseBase::new(layout);
        let mut cfg = SimilarityConfig::default();
        for task in lib.tasks().filter(|t| t.kind == TaskKind::Atomic) {
            let spec = lib.effective_condition(&task.id).expect("task is in the library");
            if spec.0.is_empty() {
                continue;
            }
            let problem = spec
                .0
                .iter()
                .map(|d| {
                    let key = match (&d.expected, base.layout.multi_valued.contains(&d.predicate)) {
                        (Expected::Value(v), true) => AttrKey::qualified(&d.subject, &d.predicate, v),
                        _ => AttrKey::new(&d.subject, &d.predicate),
                    };
                    ProblemPair::new(key, d.expected.clone())
                })
                .collect();
            for (k, v) in SimilarityConfig::from_condition(&spec).attributes {
                cfg.attributes.insert(k, v);
            }
            let case = Case { case_id: base.next_id(), problem, solution: task.id.clone(), usedtime: 0 };
            base.insert(case);
        }
        (base, cfg)
    }
}
