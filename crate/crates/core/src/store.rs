//! In-memory context triple store.
//!
//! The store keeps the *current* context: one triple per `(subject,
//! predicate)`, the latest assertion winning regardless of provider.
//! Predicates declared multi-valued (by default `HasDevice`) are keyed by
//! `(subject, predicate, object)` instead, so a room can hold several devices.
//!
//! Each change is announced exactly once on the bus topic
//! `context/<predicate>`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};

use parking_lot::{ReentrantMutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{Bus, Message, MessageKind, Payload, Topic};
use crate::clock::Stamp;
use crate::snapshot::{AttrKey, AttributeBinding, ContextSnapshot, SnapshotEntry};
use crate::value::{literal_cmp, EntityRef, Value, ValueError};

pub const DEFAULT_MULTI_VALUED: [&str; 1] = ["HasDevice"];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown provider `{0}`")]
    UnknownProvider(String),
    #[error("provider `{0}` is already live")]
    DuplicateProvider(String),
    #[error("invalid predicate `{0}`")]
    InvalidPredicate(String),
    #[error("stamp {got} precedes last stamp {last} of provider `{provider}`")]
    StampRegression { provider: String, last: Stamp, got: Stamp },
    #[error("triple pattern must bind at least one position")]
    EmptyPattern,
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProviderKind {
    #[serde(rename = "hardware")]
    HardwareSim,
    #[serde(rename = "software")]
    SoftwareSim,
    #[serde(rename = "profile")]
    UserProfile,
}

impl ProviderKind {
    fn tag(self) -> &'static str {
        match self {
            ProviderKind::HardwareSim => "hardware",
            ProviderKind::SoftwareSim => "software",
            ProviderKind::UserProfile => "profile",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "hardware" => Some(ProviderKind::HardwareSim),
            "software" => Some(ProviderKind::SoftwareSim),
            "profile" => Some(ProviderKind::UserProfile),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProviderId {
    pub id: String,
    pub kind: ProviderKind,
}

impl ProviderId {
    pub fn new(id: &str, kind: ProviderKind) -> Self {
        Self { id: id.to_string(), kind }
    }
}

impl fmt::Display for ProviderId {
    /// `kind:id`, the form used in the dump file.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.tag(), self.id)
    }
}

impl std::str::FromStr for ProviderId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, id) = s.split_once(':').ok_or_else(|| format!("provider `{s}` lacks kind"))?;
        let kind = ProviderKind::from_tag(kind).ok_or_else(|| format!("unknown provider kind `{kind}`"))?;
        if id.is_empty() {
            return Err("empty provider id".into());
        }
        Ok(ProviderId::new(id, kind))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub subject: EntityRef,
    pub predicate: String,
    pub object: Value,
    pub provider: ProviderId,
    pub stamp: Stamp,
}

impl Triple {
    pub fn new(subject: &str, predicate: &str, object: Value, provider: &ProviderId, stamp: Stamp) -> Self {
        Self {
            subject: EntityRef::new(subject).expect("valid subject"),
            predicate: predicate.to_string(),
            object,
            provider: provider.clone(),
            stamp,
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.predicate, self.object)
    }
}

pub fn validate_predicate(p: &str) -> Result<(), StoreError> {
    let bad = p.is_empty() || p.chars().any(|c| c.is_whitespace() || matches!(c, '/' | '*' | '.' | '[' | ']' | ','));
    if bad {
        Err(StoreError::InvalidPredicate(p.to_string()))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeOp {
    Asserted,
    Retracted,
}

/// Payload of a `context/<predicate>` notification.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextChange {
    pub op: ChangeOp,
    pub triple: Triple,
}

impl fmt::Display for ContextChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = match self.op {
            ChangeOp::Asserted => '+',
            ChangeOp::Retracted => '-',
        };
        write!(f, "{sign}{} by {}", self.triple, self.triple.provider)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoreDelta {
    Inserted,
    Replaced {
        previous: Triple,
    },
    /// Same object from the same provider was already stored.
    Unchanged,
}

impl StoreDelta {
    pub fn is_noop(&self) -> bool {
        matches!(self, StoreDelta::Unchanged)
    }
}

/// Query pattern; `None` positions are wildcards.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriplePattern {
    subject: Option<EntityRef>,
    predicate: Option<String>,
    object: Option<Value>,
}

impl TriplePattern {
    pub fn new(subject: Option<&str>, predicate: Option<&str>, object: Option<Value>) -> Result<Self, StoreError> {
        if subject.is_none() && predicate.is_none() && object.is_none() {
            return Err(StoreError::EmptyPattern);
        }
        Ok(Self { subject: subject.map(EntityRef::new).transpose()?, predicate: predicate.map(str::to_string), object })
    }

    pub fn matches(&self, t: &Triple) -> bool {
        self.subject.as_ref().is_none_or(|s| *s == t.subject)
            && self.predicate.as_ref().is_none_or(|p| *p == t.predicate)
            && self.object.as_ref().is_none_or(|o| *o == t.object)
    }
}

/// Read access used by condition evaluation.
pub trait ContextReader {
    fn lookup(&self, subject: &str, predicate: &str) -> Option<Value>;
}

impl ContextReader for HashMap<(String, String), Value> {
    fn lookup(&self, subject: &str, predicate: &str) -> Option<Value> {
        self.get(&(subject.to_string(), predicate.to_string())).cloned()
    }
}

type FactKey = (String, String, Option<String>);

#[derive(Default)]
struct State {
    providers: BTreeMap<String, ProviderId>,
    last_stamp: HashMap<String, Stamp>,
    facts: BTreeMap<FactKey, Triple>,
}

pub struct ContextStore {
    bus: Bus,
    multi_valued: BTreeSet<String>,
    state: RwLock<State>,
    // serialises mutation + notification so observers see changes in order
    writer: ReentrantMutex<()>,
}

impl fmt::Debug for ContextStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContextStore").field("len", &self.len()).finish()
    }
}

impl ContextStore {
    pub fn new(bus: Bus) -> Self {
        Self::with_multi_valued(bus, DEFAULT_MULTI_VALUED.iter().map(|s| s.to_string()).collect())
    }

    pub fn with_multi_valued(bus: Bus, multi_valued: BTreeSet<String>) -> Self {
        Self { bus, multi_valued, state: RwLock::new(State::default()), writer: ReentrantMutex::new(()) }
    }

    pub fn multi_valued(&self) -> &BTreeSet<String> {
        &self.multi_valued
    }

    pub fn provider_join(&self, provider: ProviderId) -> Result<(), StoreError> {
        let _w = self.writer.lock();
        let mut st = self.state.write();
        if st.providers.contains_key(&provider.id) {
            return Err(StoreError::DuplicateProvider(provider.id));
        }
        st.providers.insert(provider.id.clone(), provider);
        Ok(())
    }

    pub fn is_live(&self, provider_id: &str) -> bool {
        self.state.read().providers.contains_key(provider_id)
    }

    pub fn providers(&self) -> Vec<ProviderId> {
        self.state.read().providers.values().cloned().collect()
    }

    fn key_of(&self, t: &Triple) -> FactKey {
        let qualifier = self.multi_valued.contains(&t.predicate).then(|| t.object.to_string());
        (t.subject.as_str().to_string(), t.predicate.clone(), qualifier)
    }

    fn notify(&self, op: ChangeOp, triple: Triple) {
        let topic = Topic::new(format!("context/{}", triple.predicate)).expect("validated predicate");
        let source = triple.provider.id.clone();
        let stamp = triple.stamp;
        self.bus.publish(Message::new(
            topic,
            MessageKind::Context,
            &source,
            stamp,
            Payload::Context(ContextChange { op, triple }),
        ));
    }

    pub fn assert_triple(&self, t: Triple) -> Result<StoreDelta, StoreError> {
        validate_predicate(&t.predicate)?;
        t.object.validate()?;
        let _w = self.writer.lock();
        let delta = {
            let mut st = self.state.write();
            if !st.providers.contains_key(&t.provider.id) {
                return Err(StoreError::UnknownProvider(t.provider.id.clone()));
            }
            if let Some(&last) = st.last_stamp.get(&t.provider.id) {
                if t.stamp < last {
                    return Err(StoreError::StampRegression { provider: t.provider.id.clone(), last, got: t.stamp });
                }
            }
            st.last_stamp.insert(t.provider.id.clone(), t.stamp);
            let key = self.key_of(&t);
            match st.facts.get(&key) {
                Some(prev) if prev.object == t.object && prev.provider == t.provider => StoreDelta::Unchanged,
                Some(_) => {
                    let previous = st.facts.insert(key, t.clone()).expect("present");
                    StoreDelta::Replaced { previous }
                }
                None => {
                    st.facts.insert(key, t.clone());
                    StoreDelta::Inserted
                }
            }
        };
        if !delta.is_noop() {
            self.notify(ChangeOp::Asserted, t);
        }
        Ok(delta)
    }

    /// Remove matching facts; returns the removed triples.
    pub fn retract(&self, pattern: &TriplePattern) -> Vec<Triple> {
        let _w = self.writer.lock();
        let removed: Vec<Triple> = {
            let mut st = self.state.write();
            let keys: Vec<FactKey> =
                st.facts.iter().filter(|(_, t)| pattern.matches(t)).map(|(k, _)| k.clone()).collect();
            keys.iter().filter_map(|k| st.facts.remove(k)).collect()
        };
        for t in &removed {
            self.notify(ChangeOp::Retracted, t.clone());
        }
        removed
    }

    /// Unregister a provider and delete every triple it supplied.
    pub fn provider_leave(&self, provider_id: &str) -> Result<usize, StoreError> {
        let _w = self.writer.lock();
        let removed: Vec<Triple> = {
            let mut st = self.state.write();
            if st.providers.remove(provider_id).is_none() {
                return Err(StoreError::UnknownProvider(provider_id.to_string()));
            }
            st.last_stamp.remove(provider_id);
            let keys: Vec<FactKey> =
                st.facts.iter().filter(|(_, t)| t.provider.id == provider_id).map(|(k, _)| k.clone()).collect();
            keys.iter().filter_map(|k| st.facts.remove(k)).collect()
        };
        for t in &removed {
            self.notify(ChangeOp::Retracted, t.clone());
        }
        Ok(removed.len())
    }

    /// Matching triples ordered by subject, predicate, then object literal.
    pub fn query_pattern(&self, q: &TriplePattern) -> Vec<Triple> {
        let st = self.state.read();
        let mut out: Vec<Triple> = st.facts.values().filter(|t| q.matches(t)).cloned().collect();
        out.sort_by(|a, b| {
            a.subject
                .cmp(&b.subject)
                .then_with(|| a.predicate.cmp(&b.predicate))
                .then_with(|| literal_cmp(&a.object, &b.object))
        });
        out
    }

    pub fn all_triples(&self) -> Vec<Triple> {
        self.state.read().facts.values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.state.read().facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Current values for the named bindings. Absent facts are flagged, not
    /// defaulted. A binding on a multi-valued predicate yields one entry per
    /// stored value, named `name[value]`.
    pub fn snapshot_attributes(&self, bindings: &[AttributeBinding]) -> ContextSnapshot {
        let st = self.state.read();
        let mut entries = Vec::with_capacity(bindings.len());
        for b in bindings {
            let subject = b.subject.as_str();
            if self.multi_valued.contains(&b.predicate) {
                let values: Vec<&Triple> = st
                    .facts
                    .range((subject.to_string(), b.predicate.clone(), None)..)
                    .take_while(|((s, p, _), _)| s == subject && *p == b.predicate)
                    .map(|(_, t)| t)
                    .collect();
                if values.is_empty() {
                    entries.push(SnapshotEntry {
                        name: b.name.clone(),
                        key: AttrKey::new(subject, &b.predicate),
                        value: None,
                    });
                }
                for t in values {
                    let key = AttrKey::qualified(subject, &b.predicate, &t.object);
                    entries.push(SnapshotEntry {
                        name: format!("{}[{}]", b.name, t.object),
                        key,
                        value: Some(t.object.clone()),
                    });
                }
            } else {
                let value = st.facts.get(&(subject.to_string(), b.predicate.clone(), None)).map(|t| t.object.clone());
                entries.push(SnapshotEntry { name: b.name.clone(), key: AttrKey::new(subject, &b.predicate), value });
            }
        }
        ContextSnapshot::new(entries)
    }

    /// Snapshot of every stored fact, each named by its attribute key.
    pub fn snapshot_all(&self) -> ContextSnapshot {
        let triples = self.all_triples();
        ContextSnapshot::from_triples(&triples, &self.multi_valued)
    }

    /// Write `subj,prop,obj,provider,stamp` rows in key order.
    pub fn dump_csv<W: Write>(&self, out: W) -> Result<(), StoreError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["subj", "prop", "obj", "provider", "stamp"]).map_err(csv_io)?;
        // Stamp order keeps the dump loadable under per-provider monotonicity.
        let mut triples = self.all_triples();
        triples.sort_by_key(|t| t.stamp);
        for t in triples {
            w.write_record([
                t.subject.as_str(),
                &t.predicate,
                &t.object.to_string(),
                &t.provider.to_string(),
                &t.stamp.0.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Replay a dump, registering unknown providers on the way.
    pub fn load_csv<R: Read>(&self, input: R) -> Result<usize, StoreError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rdr.headers().map_err(|e| parse_err(1, e))?.clone();
        if header.iter().collect::<Vec<_>>() != ["subj", "prop", "obj", "provider", "stamp"] {
            return Err(StoreError::Parse { line: 1, message: "unexpected header".into() });
        }
        let mut n = 0;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e))?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize| rec.get(i).unwrap_or_default();
            let provider: ProviderId = field(3).parse().map_err(|m: String| StoreError::Parse { line, message: m })?;
            let stamp =
                field(4).parse::<u64>().map_err(|e| StoreError::Parse { line, message: format!("stamp: {e}") })?;
            if !self.is_live(&provider.id) {
                self.provider_join(provider.clone())?;
            }
            let subject = EntityRef::new(field(0)).map_err(|e| StoreError::Parse { line, message: e.to_string() })?;
            let object =
                Value::parse_literal(field(2)).map_err(|e| StoreError::Parse { line, message: e.to_string() })?;
            self.assert_triple(Triple {
                subject,
                predicate: field(1).to_string(),
                object,
                provider,
                stamp: Stamp(stamp),
            })?;
            n += 1;
        }
        Ok(n)
    }
}

impl ContextReader for ContextStore {
    fn lookup(&self, subject: &str, predicate: &str) -> Option<Value> {
        let st = self.state.read();
        if let Some(t) = st.facts.get(&(subject.to_string(), predicate.to_string(), None)) {
            return Some(t.object.clone());
        }
        st.facts
            .range((subject.to_string(), predicate.to_string(), Some(String::new()))..)
            .next()
            .filter(|((s, p, _), _)| s == subject && p == predicate)
            .map(|(_, t)| t.object.clone())
    }
}

fn csv_io(e: csv::Error) -> StoreError {
    StoreError::Io(std::io::Error::other(e))
}

fn parse_err(line: u64, e: impl fmt::Display) -> StoreError {
    StoreError::Parse { line, message: e.to_string() }
}
