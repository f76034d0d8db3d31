//! Task hierarchy, task and contract tuples, context inheritance and
//! priority ordering.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::eca::{parse_file, RuleFile, SyntaxError};
use crate::value::{Value, ValueError};

pub const MAX_PRIORITY: u8 = 9;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid task id `{0}`")]
    InvalidId(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("task library is empty")]
    EmptyLibrary,
    #[error("task {child} has no parent {parent} in the library")]
    DanglingParent { child: TaskId, parent: TaskId },
    #[error("duplicate task id {0}")]
    DuplicateTaskId(TaskId),
    #[error("library has more than one root: {0:?}")]
    MultipleRoots(Vec<TaskId>),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("missing or empty contract for task {0}")]
    MissingContract(TaskId),
    #[error("duplicate contract {0}")]
    DuplicateContract(TaskId),
    #[error("contract {0} has no task")]
    OrphanContract(TaskId),
    #[error("task {task}: {reason}")]
    Invalid { task: TaskId, reason: String },
    #[error("rules of contract {contract}: {error}")]
    Rules { contract: TaskId, error: SyntaxError },
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Dotted path of positive integers, e.g. `1.1.2.2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TaskId {
    text: String,
    segments: Vec<u32>,
}

impl TaskId {
    pub fn parse(s: &str) -> Result<TaskId, TaskError> {
        let segments: Option<Vec<u32>> = s
            .split('.')
            .map(|seg| {
                if seg.is_empty() || !seg.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                seg.parse::<u32>().ok().filter(|n| *n > 0)
            })
            .collect();
        match segments {
            Some(segments) if !s.is_empty() => {
                let text = segments.iter().map(u32::to_string).collect::<Vec<_>>().join(".");
                if text != s {
                    return Err(TaskError::InvalidId(s.to_string()));
                }
                Ok(TaskId { text, segments })
            }
            _ => Err(TaskError::InvalidId(s.to_string())),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> &[u32] {
        &self.segments
    }

    /// Path minus its last segment.
    pub fn parent(&self) -> Option<TaskId> {
        (self.segments.len() > 1).then(|| {
            let segments = self.segments[..self.segments.len() - 1].to_vec();
            let text = segments.iter().map(u32::to_string).collect::<Vec<_>>().join(".");
            TaskId { text, segments }
        })
    }

    pub fn is_ancestor_of(&self, other: &TaskId) -> bool {
        other.segments.len() > self.segments.len() && other.segments.starts_with(&self.segments)
    }
}

impl Ord for TaskId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.segments.cmp(&other.segments)
    }
}

impl PartialOrd for TaskId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl FromStr for TaskId {
    type Err = TaskError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskId::parse(s)
    }
}

impl Serialize for TaskId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for TaskId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TaskId::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrKind {
    Numeric,
    Ratio,
    Interval,
    Categorical,
    Boolean,
}

impl fmt::Display for AttrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttrKind::Numeric => "numeric",
            AttrKind::Ratio => "ratio",
            AttrKind::Interval => "interval",
            AttrKind::Categorical => "categorical",
            AttrKind::Boolean => "boolean",
        })
    }
}

/// Expected value of an attribute: a single value or a closed range.
#[derive(Debug, Clone, PartialEq)]
pub enum Expected {
    Value(Value),
    Interval { lo: Value, hi: Value },
}

impl Expected {
    pub fn interval(lo: Value, hi: Value) -> Self {
        Expected::Interval { lo, hi }
    }

    /// Literal form: a value literal, or `[lo,hi]`.
    pub fn parse(s: &str) -> Result<Expected, ValueError> {
        let t = s.trim();
        if let Some(inner) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let (lo, hi) = inner.split_once(',').ok_or_else(|| ValueError::Malformed(s.to_string()))?;
            let (lo, hi) = (Value::parse_literal(lo)?, Value::parse_literal(hi)?);
            return Ok(Expected::Interval { lo, hi });
        }
        Ok(Expected::Value(Value::parse_literal(t)?))
    }

    /// Scalar bounds, `[v, v]` for a single value.
    pub fn scalar_bounds(&self) -> Option<(f64, f64)> {
        match self {
            Expected::Value(v) => v.as_scalar().map(|x| (x, x)),
            Expected::Interval { lo, hi } => Some((lo.as_scalar()?, hi.as_scalar()?)),
        }
    }
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expected::Value(v) => write!(f, "{v}"),
            Expected::Interval { lo, hi } => write!(f, "[{lo},{hi}]"),
        }
    }
}

impl From<Value> for Expected {
    fn from(v: Value) -> Self {
        Expected::Value(v)
    }
}

impl Serialize for Expected {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expected {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) => Expected::parse(&s).map_err(serde::de::Error::custom),
            serde_json::Value::Number(n) => {
                let x = n.as_f64().ok_or_else(|| serde::de::Error::custom("number out of range"))?;
                Ok(Expected::Value(Value::number(x)))
            }
            serde_json::Value::Bool(b) => Ok(Expected::Value(Value::Boolean(b))),
            other => Err(serde::de::Error::custom(format!("unsupported expected value {other}"))),
        }
    }
}

/// One condition attribute `c_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDescriptor {
    pub name: String,
    pub subject: String,
    pub predicate: String,
    pub kind: AttrKind,
    pub expected: Expected,
    /// Maximal difference; the denominator for `ratio`.
    pub dom: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl AttributeDescriptor {
    pub fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("attribute with empty name".into());
        }
        if !(self.dom.is_finite() && self.dom > 0.0) {
            return Err(format!("attribute {}: dom must be positive", self.name));
        }
        if let Some(w) = self.weight {
            if !(w > 0.0 && w <= 1.0) {
                return Err(format!("attribute {}: weight {w} outside (0,1]", self.name));
            }
        }
        let ok = match (self.kind, &self.expected) {
            (AttrKind::Numeric | AttrKind::Ratio, Expected::Value(v)) => v.as_scalar().is_some(),
            (AttrKind::Interval, e) => match e.scalar_bounds() {
                Some((lo, hi)) => lo <= hi,
                None => false,
            },
            (AttrKind::Categorical, Expected::Value(_)) => true,
            (AttrKind::Boolean, Expected::Value(Value::Boolean(_))) => true,
            _ => false,
        };
        if !ok {
            return Err(format!(
                "attribute {}: expected `{}` does not fit kind {}",
                self.name, self.expected, self.kind
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConditionSpec(pub Vec<AttributeDescriptor>);

impl ConditionSpec {
    pub fn names(&self) -> Vec<&str> {
        self.0.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&AttributeDescriptor> {
        self.0.iter().find(|d| d.name == name)
    }

    fn validate(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for d in &self.0 {
            d.validate()?;
            if !seen.insert(&d.name) {
                return Err(format!("attribute {} listed twice", d.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Root,
    Composite,
    Atomic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: TaskId,
    pub name: String,
    pub condition: ConditionSpec,
    pub priority: u8,
    /// Always equal to `id`.
    pub contract: TaskId,
    pub kind: TaskKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Procedure {
    Steps(RuleFile),
    Children(Vec<TaskId>),
}

impl Procedure {
    pub fn is_empty(&self) -> bool {
        match self {
            Procedure::Steps(f) => f.sets.is_empty(),
            Procedure::Children(c) => c.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskContract {
    pub id: TaskId,
    pub name: String,
    pub parent_task: Option<TaskId>,
    /// Abstract service types.
    pub requirement: Vec<String>,
    pub procedure: Procedure,
}

// ---- file format ----

#[derive(Debug, Serialize, Deserialize)]
struct LibraryFile {
    tasks: Vec<TaskEntry>,
    #[serde(default)]
    contracts: Vec<ContractEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskEntry {
    id: TaskId,
    name: String,
    priority: u8,
    #[serde(default)]
    condition: ConditionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    contract: Option<TaskId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<TaskKind>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ContractEntry {
    id: TaskId,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent_task: Option<TaskId>,
    #[serde(default)]
    requirement: Vec<String>,
    procedure: ProcedureEntry,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ProcedureEntry {
    Rules(String),
    RulesFile(PathBuf),
    Children(Vec<TaskId>),
}

/// Validated, immutable task hierarchy with its contracts.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLibrary {
    tasks: BTreeMap<TaskId, Task>,
    contracts: BTreeMap<TaskId, TaskContract>,
    root: TaskId,
}

impl TaskLibrary {
    /// Builds a library from tasks and contracts, checking the hierarchy:
    /// unique ids, a single shallowest root, every other task's parent
    /// present, priorities in range, well-formed conditions and contract
    /// shapes. Task kinds are derived from the structure.
    pub fn from_parts(tasks: Vec<Task>, contracts: Vec<TaskContract>) -> Result<TaskLibrary, TaskError> {
        if tasks.is_empty() {
            return Err(TaskError::EmptyLibrary);
        }
        let mut map = BTreeMap::new();
        for t in tasks {
            if map.contains_key(&t.id) {
                return Err(TaskError::DuplicateTaskId(t.id));
            }
            map.insert(t.id.clone(), t);
        }
        let min_depth = map.keys().map(TaskId::depth).min().expect("non-empty");
        let roots: Vec<TaskId> = map.keys().filter(|id| id.depth() == min_depth).cloned().collect();
        if roots.len() > 1 {
            return Err(TaskError::MultipleRoots(roots));
        }
        let root = roots.into_iter().next().expect("one root");
        for id in map.keys() {
            if *id == root {
                continue;
            }
            let parent = id.parent().expect("deeper than root");
            if !map.contains_key(&parent) {
                return Err(TaskError::DanglingParent { child: id.clone(), parent });
            }
        }
        let children = children_index(&map);
        for (id, t) in map.iter_mut() {
            let invalid = |reason: String| TaskError::Invalid { task: id.clone(), reason };
            if t.priority > MAX_PRIORITY {
                return Err(invalid(format!("priority {} outside 0..={MAX_PRIORITY}", t.priority)));
            }
            if t.contract != *id {
                return Err(invalid(format!("contract id {} differs from task id", t.contract)));
            }
            t.condition.validate().map_err(invalid)?;
            t.kind = if children.get(id).is_none_or(|c| c.is_empty()) {
                TaskKind::Atomic
            } else if *id == root {
                TaskKind::Root
            } else {
                TaskKind::Composite
            };
        }

        let mut cmap = BTreeMap::new();
        for c in contracts {
            if !map.contains_key(&c.id) {
                return Err(TaskError::OrphanContract(c.id));
            }
            if cmap.contains_key(&c.id) {
                return Err(TaskError::DuplicateContract(c.id));
            }
            let invalid = |reason: String| TaskError::Invalid { task: c.id.clone(), reason };
            if let Some(pt) = &c.parent_task {
                if Some(pt) != c.id.parent().as_ref() || !map.contains_key(pt) {
                    return Err(invalid(format!("parent_task {pt} is not the parent of {}", c.id)));
                }
            }
            let kids = children.get(&c.id).cloned().unwrap_or_default();
            match &c.procedure {
                Procedure::Children(list) => {
                    if let Some(bad) = list.iter().find(|k| !kids.contains(k)) {
                        return Err(invalid(format!("{bad} is not a child task")));
                    }
                }
                Procedure::Steps(_) if !kids.is_empty() => {
                    return Err(invalid("a task with subtasks needs a children procedure".into()));
                }
                Procedure::Steps(_) => {}
            }
            cmap.insert(c.id.clone(), c);
        }
        Ok(TaskLibrary { tasks: map, contracts: cmap, root })
    }

    /// Loads and validates a library file. Composite tasks without a
    /// contract get one listing their subtasks; atomic tasks must have a
    /// non-empty contract.
    pub fn load_definitions(path: &Path) -> Result<TaskLibrary, TaskError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| TaskError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    /// Parses library JSON; `rules_file` paths resolve against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<TaskLibrary, TaskError> {
        if text.trim().is_empty() {
            return Err(TaskError::EmptyLibrary);
        }
        let file: LibraryFile =
            serde_json::from_str(text).map_err(|e| TaskError::Parse { line: e.line(), message: e.to_string() })?;
        let declared: Vec<(TaskId, TaskKind)> =
            file.tasks.iter().filter_map(|e| e.kind.map(|k| (e.id.clone(), k))).collect();
        let tasks: Vec<Task> = file
            .tasks
            .into_iter()
            .map(|e| Task {
                contract: e.contract.unwrap_or_else(|| e.id.clone()),
                id: e.id,
                name: e.name,
                condition: e.condition,
                priority: e.priority,
                kind: TaskKind::Atomic,
            })
            .collect();

        let mut contracts = Vec::new();
        for c in file.contracts {
            let procedure = match c.procedure {
                ProcedureEntry::Children(ids) => Procedure::Children(ids),
                ProcedureEntry::Rules(src) => Procedure::Steps(
                    parse_file(&src).map_err(|error| TaskError::Rules { contract: c.id.clone(), error })?,
                ),
                ProcedureEntry::RulesFile(p) => {
                    let path = base.join(&p);
                    let src = std::fs::read_to_string(&path)
                        .map_err(|source| TaskError::Io { path: path.clone(), source })?;
                    Procedure::Steps(
                        parse_file(&src).map_err(|error| TaskError::Rules { contract: c.id.clone(), error })?,
                    )
                }
            };
            contracts.push(TaskContract {
                id: c.id,
                name: c.name,
                parent_task: c.parent_task,
                requirement: c.requirement,
                procedure,
            });
        }

        let mut lib = Self::from_parts(tasks, contracts)?;
        for (id, given) in declared {
            let actual = lib.tasks[&id].kind;
            if given != actual {
                return Err(TaskError::Invalid {
                    task: id.clone(),
                    reason: format!("declared kind {given:?} but structure makes it {actual:?}"),
                });
            }
        }
        let children = children_index(&lib.tasks);
        for (id, task) in &lib.tasks {
            let kids = children.get(id).cloned().unwrap_or_default();
            match lib.contracts.get(id) {
                Some(c) if !c.procedure.is_empty() => {}
                None if !kids.is_empty() => {
                    let contract = TaskContract {
                        id: id.clone(),
                        name: format!("Contract_{}", task.name),
                        parent_task: None,
                        requirement: Vec::new(),
                        procedure: Procedure::Children(kids),
                    };
                    lib.contracts.insert(id.clone(), contract);
                }
                _ => return Err(TaskError::MissingContract(id.clone())),
            }
        }
        Ok(lib)
    }

    /// JSON form with rules written inline.
    pub fn to_json(&self) -> String {
        let file = LibraryFile {
            tasks: self
                .tasks
                .values()
                .map(|t| TaskEntry {
                    id: t.id.clone(),
                    name: t.name.clone(),
                    priority: t.priority,
                    condition: t.condition.clone(),
                    contract: None,
                    kind: Some(t.kind),
                })
                .collect(),
            contracts: self
                .contracts
                .values()
                .map(|c| ContractEntry {
                    id: c.id.clone(),
                    name: c.name.clone(),
                    parent_task: c.parent_task.clone(),
                    requirement: c.requirement.clone(),
                    procedure: match &c.procedure {
                        Procedure::Steps(f) => ProcedureEntry::Rules(f.to_string()),
                        Procedure::Children(k) => ProcedureEntry::Children(k.clone()),
                    },
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("library serialises")
    }

    pub fn save(&self, path: &Path) -> Result<(), TaskError> {
        std::fs::write(path, self.to_json()).map_err(|source| TaskError::Io { path: path.to_path_buf(), source })
    }

    pub fn root(&self) -> &TaskId {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.values()
    }

    pub fn task(&self, id: &TaskId) -> Result<&Task, TaskError> {
        self.tasks.get(id).ok_or_else(|| TaskError::UnknownTask(id.clone()))
    }

    pub fn by_name(&self, name: &str) -> Option<&Task> {
        self.tasks.values().find(|t| t.name == name)
    }

    pub fn children(&self, id: &TaskId) -> Vec<TaskId> {
        self.tasks.keys().filter(|k| k.parent().as_ref() == Some(id)).cloned().collect()
    }

    /// `id` and its ancestors present in the library, deepest first.
    pub fn lineage(&self, id: &TaskId) -> Result<Vec<&Task>, TaskError> {
        let mut out = vec![self.task(id)?];
        let mut cur = id.parent();
        while let Some(p) = cur {
            match self.tasks.get(&p) {
                Some(t) => out.push(t),
                None => break,
            }
            cur = p.parent();
        }
        Ok(out)
    }

    /// Own condition merged with every ancestor's; on a name clash the
    /// deeper descriptor replaces the shallower one in place.
    pub fn effective_condition(&self, id: &TaskId) -> Result<ConditionSpec, TaskError> {
        let mut merged: Vec<AttributeDescriptor> = Vec::new();
        for t in self.lineage(id)?.into_iter().rev() {
            for d in &t.condition.0 {
                match merged.iter_mut().find(|m| m.name == d.name) {
                    Some(slot) => *slot = d.clone(),
                    None => merged.push(d.clone()),
                }
            }
        }
        Ok(ConditionSpec(merged))
    }

    /// `[Pr(t), Pr(parent), ..., Pr(root)]`.
    pub fn priority_key(&self, id: &TaskId) -> Result<Vec<u8>, TaskError> {
        Ok(self.lineage(id)?.iter().map(|t| t.priority).collect())
    }

    /// `Greater` when `a` is more urgent than `b`: higher priority, then the
    /// parents' priorities, then the smaller id.
    pub fn compare_priority(&self, a: &TaskId, b: &TaskId) -> Result<Ordering, TaskError> {
        let (ka, kb) = (self.priority_key(a)?, self.priority_key(b)?);
        Ok(ka.cmp(&kb).then_with(|| b.cmp(a)))
    }

    pub fn resolve_contract(&self, id: &TaskId) -> Result<&TaskContract, TaskError> {
        self.task(id)?;
        match self.contracts.get(id) {
            Some(c) if !c.procedure.is_empty() => Ok(c),
            _ => Err(TaskError::MissingContract(id.clone())),
        }
    }

    pub fn contracts(&self) -> impl Iterator<Item = &TaskContract> {
        self.contracts.values()
    }
}

fn children_index(map: &BTreeMap<TaskId, Task>) -> BTreeMap<TaskId, Vec<TaskId>> {
    let mut idx: BTreeMap<TaskId, Vec<TaskId>> = BTreeMap::new();
    for id in map.keys() {
        if let Some(p) = id.parent() {
            if map.contains_key(&p) {
                idx.entry(p).or_default().push(id.clone());
            }
        }
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> TaskId {
        TaskId::parse(s).unwrap()
    }

    fn task(i: &str, pr: u8, attrs: &[(&str, f64)]) -> Task {
        Task {
            id: id(i),
            name: format!("T{i}"),
            condition: ConditionSpec(
                attrs
                    .iter()
                    .map(|(n, dom)| AttributeDescriptor {
                        name: n.to_string(),
                        subject: "U".into(),
                        predicate: n.to_string(),
                        kind: AttrKind::Numeric,
                        expected: Expected::Value(Value::number(0.0)),
                        dom: *dom,
                        weight: None,
                    })
                    .collect(),
            ),
            priority: pr,
            contract: id(i),
            kind: TaskKind::Atomic,
        }
    }

    #[test]
    fn ids() {
        assert_eq!(id("1.1.2").parent(), Some(id("1.1")));
        assert!(id("1").parent().is_none());
        for bad in ["", "1..2", "0", "1.a", "01", "1.", "-1"] {
            assert!(TaskId::parse(bad).is_err(), "{bad}");
        }
        assert!(id("1.2") < id("1.10"));
    }

    #[test]
    fn dangling_parent() {
        let err = TaskLibrary::from_parts(vec![task("1", 0, &[]), task("1.2.1", 0, &[])], vec![]).unwrap_err();
        assert!(matches!(err, TaskError::DanglingParent { .. }));
    }

    #[test]
    fn single_deep_task_is_root() {
        let lib = TaskLibrary::from_parts(vec![task("1.1.1.3", 3, &[])], vec![]).unwrap();
        assert_eq!(lib.root(), &id("1.1.1.3"));
        assert_eq!(lib.len(), 1);
    }

    #[test]
    fn two_roots_rejected() {
        let err = TaskLibrary::from_parts(vec![task("1", 0, &[]), task("2", 0, &[])], vec![]).unwrap_err();
        assert!(matches!(err, TaskError::MultipleRoots(_)));
    }

    #[test]
    fn kinds_are_derived() {
        let lib = TaskLibrary::from_parts(vec![task("1", 0, &[]), task("1.1", 0, &[]), task("1.1.1", 0, &[])], vec![])
            .unwrap();
        assert_eq!(lib.task(&id("1")).unwrap().kind, TaskKind::Root);
        assert_eq!(lib.task(&id("1.1")).unwrap().kind, TaskKind::Composite);
        assert_eq!(lib.task(&id("1.1.1")).unwrap().kind, TaskKind::Atomic);
    }

    #[test]
    fn inheritance_deepest_wins() {
        let lib = TaskLibrary::from_parts(
            vec![
                task("1", 0, &[("Location", 10.0), ("Country", 1.0)]),
                task("1.1", 0, &[("Time", 60.0)]),
                task("1.1.1", 0, &[("Location", 2.0)]),
            ],
            vec![],
        )
        .unwrap();
        let spec = lib.effective_condition(&id("1.1.1")).unwrap();
        assert_eq!(spec.names(), vec!["Location", "Country", "Time"]);
        assert_eq!(spec.get("Location").unwrap().dom, 2.0);
        let root = lib.effective_condition(&id("1")).unwrap();
        assert_eq!(root, lib.task(&id("1")).unwrap().condition);
    }

    #[test]
    fn priority_order() {
        let lib = TaskLibrary::from_parts(
            vec![
                task("1", 0, &[]),
                task("1.1", 5, &[]),
                task("1.2", 2, &[]),
                task("1.1.1", 3, &[]),
                task("1.2.1", 3, &[]),
                task("1.3", 9, &[]),
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(lib.compare_priority(&id("1.3"), &id("1.1.1")).unwrap(), Ordering::Greater);
        assert_eq!(lib.compare_priority(&id("1.1.1"), &id("1.2.1")).unwrap(), Ordering::Greater);
        assert_eq!(lib.compare_priority(&id("1.2"), &id("1.2")).unwrap(), Ordering::Equal);
        assert!(matches!(lib.compare_priority(&id("1.9"), &id("1")), Err(TaskError::UnknownTask(_))));
    }

    #[test]
    fn invalid_descriptor_rejected() {
        let mut t = task("1", 0, &[("A", 0.0)]);
        assert!(TaskLibrary::from_parts(vec![t.clone()], vec![]).is_err());
        t.condition.0[0].dom = 1.0;
        t.condition.0[0].weight = Some(1.5);
        assert!(TaskLibrary::from_parts(vec![t], vec![]).is_err());
    }

    #[test]
    fn expected_literals() {
        let e = Expected::parse("[12:00,13:30]").unwrap();
        assert_eq!(e, Expected::interval(Value::time(12, 0), Value::time(13, 30)));
        assert_eq!(e.to_string(), "[12:00,13:30]");
        assert_eq!(e.scalar_bounds(), Some((720.0, 810.0)));
    }

    #[test]
    fn json_round_trip_and_missing_contract() {
        let src = r#"{
          "tasks": [
            {"id": "1", "name": "Root", "priority": 0},
            {"id": "1.1", "name": "Leaf", "priority": 3,
             "condition": [{"name": "Time", "subject": "U", "predicate": "Time", "kind": "interval",
                            "expected": "[7:00,8:00]", "dom": 60}]}
          ],
          "contracts": [
            {"id": "1.1", "name": "C", "parent_task": "1", "requirement": ["PDA"],
             "procedure": {"rules": "rules { When E THEN DO <P>.S:M(); }"}}
          ]
        }"#;
        let lib = TaskLibrary::from_json(src, Path::new(".")).unwrap();
        assert!(matches!(lib.resolve_contract(&id("1")).unwrap().procedure, Procedure::Children(_)));
        let again = TaskLibrary::from_json(&lib.to_json(), Path::new(".")).unwrap();
        assert_eq!(again, lib);

        let no_contract = r#"{"tasks": [{"id": "1", "name": "A", "priority": 1}]}"#;
        assert!(matches!(TaskLibrary::from_json(no_contract, Path::new(".")), Err(TaskError::MissingContract(_))));
        let empty_steps = r#"{"tasks": [{"id": "1", "name": "A", "priority": 1}],
            "contracts": [{"id": "1", "name": "C", "procedure": {"rules": ""}}]}"#;
        assert!(matches!(TaskLibrary::from_json(empty_steps, Path::new(".")), Err(TaskError::MissingContract(_))));
        assert!(matches!(TaskLibrary::from_json("", Path::new(".")), Err(TaskError::EmptyLibrary)));
        let err = TaskLibrary::from_json("{\n\"tasks\": [\n{\"id\": 3}]}", Path::new(".")).unwrap_err();
        assert!(matches!(err, TaskError::Parse { line: 3, .. }), "{err}");
    }
}
