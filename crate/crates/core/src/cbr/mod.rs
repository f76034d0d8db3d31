//! Case-based task inference: case representation, similarity, partitioned
//! retrieval, learning and triple-form persistence.

mod base;
mod persist;
pub mod similarity;

use std::fmt;

use thiserror::Error;

use crate::snapshot::{AttrKey, ContextSnapshot};
use crate::task::{Expected, TaskId};

pub use base::{CaseBase, CaseBaseLayout, MatchResult, Ranked, UNZONED};
pub use persist::{load_case_base, persist_case_base, CASE_HEADER, TASK_PREDICATE};
pub use similarity::{
    attr_distance, combine, local_similarity, manhattan_distance, weighted_similarity, AttrSim, Similarity,
    SimilarityConfig, DEFAULT_THETA,
};

#[derive(Debug, Error)]
pub enum CbrError {
    #[error("attribute {attr}: {reason}")]
    KindMismatch { attr: String, reason: String },
    #[error("the two vectors do not carry the same attributes")]
    AttributeSetMismatch,
    #[error("no attribute is shared by the case and the snapshot")]
    NoCommonAttributes,
    #[error("snapshot has no present attribute")]
    EmptySnapshot,
    #[error("an identical case is already stored as case {0}")]
    DuplicateExactCase(u64),
    #[error("invalid similarity config: {0}")]
    InvalidConfig(String),
    #[error("case file line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One attribute of a case problem description.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemPair {
    pub key: AttrKey,
    pub expected: Expected,
}

impl ProblemPair {
    pub fn new(key: AttrKey, expected: impl Into<Expected>) -> Self {
        ProblemPair { key, expected: expected.into() }
    }

    pub fn name(&self) -> String {
        self.key.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub case_id: u64,
    pub problem: Vec<ProblemPair>,
    pub solution: TaskId,
    pub usedtime: u64,
}

impl Case {
    /// Same solution and the same problem pairs in any order.
    pub fn same_content(&self, other: &Case) -> bool {
        if self.solution != other.solution || self.problem.len() != other.problem.len() {
            return false;
        }
        self.problem.iter().all(|p| other.problem.contains(p))
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case {} -> {} (used {}):", self.case_id, self.solution, self.usedtime)?;
        for p in &self.problem {
            write!(f, " {}={}", p.key, p.expected)?;
        }
        Ok(())
    }
}

/// Case whose problem mirrors the present attributes of `snapshot`.
pub fn represent_case(snapshot: &ContextSnapshot, solution: TaskId, case_id: u64) -> Result<Case, CbrError> {
    let problem: Vec<ProblemPair> = snapshot.present().map(|(k, v)| ProblemPair::new(k.clone(), v.clone())).collect();
    if problem.is_empty() {
        return Err(CbrError::EmptySnapshot);
    }
    Ok(Case { case_id, problem, solution, usedtime: 0 })
}
