//! Attribute vectors extracted from the context store.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::store::Triple;
use crate::value::{EntityRef, Value};

/// Identity of one context attribute: the `(subject, predicate)` pair it is
/// read from. Multi-valued predicates (e.g. `HasDevice`) yield one attribute
/// per value, told apart by the `qualifier` (the value's literal).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttrKey {
    pub subject: String,
    pub predicate: String,
    pub qualifier: Option<String>,
}

impl AttrKey {
    pub fn new(subject: &str, predicate: &str) -> Self {
        Self { subject: subject.to_string(), predicate: predicate.to_string(), qualifier: None }
    }

    pub fn qualified(subject: &str, predicate: &str, value: &Value) -> Self {
        Self { subject: subject.to_string(), predicate: predicate.to_string(), qualifier: Some(value.to_string()) }
    }

    /// Key for a fact, qualified when the predicate is multi-valued.
    pub fn for_fact(subject: &str, predicate: &str, value: &Value, multi_valued: &BTreeSet<String>) -> Self {
        if multi_valued.contains(predicate) {
            Self::qualified(subject, predicate, value)
        } else {
            Self::new(subject, predicate)
        }
    }
}

impl fmt::Display for AttrKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.subject, self.predicate)?;
        if let Some(q) = &self.qualifier {
            write!(f, "[{q}]")?;
        }
        Ok(())
    }
}

/// Names an attribute and the fact it is read from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeBinding {
    pub name: String,
    pub subject: EntityRef,
    pub predicate: String,
}

impl AttributeBinding {
    pub fn new(name: &str, subject: &str, predicate: &str) -> Self {
        Self {
            name: name.to_string(),
            subject: EntityRef::new(subject).expect("valid subject"),
            predicate: predicate.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEntry {
    pub name: String,
    pub key: AttrKey,
    /// `None` when the fact is not currently in the store.
    pub value: Option<Value>,
}

/// Immutable named attribute vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextSnapshot {
    entries: Vec<SnapshotEntry>,
}

impl ContextSnapshot {
    pub fn new(entries: Vec<SnapshotEntry>) -> Self {
        Self { entries }
    }

    /// Every triple becomes one present attribute named after its key.
    pub fn from_triples<'a>(triples: impl IntoIterator<Item = &'a Triple>, multi_valued: &BTreeSet<String>) -> Self {
        let entries = triples
            .into_iter()
            .map(|t| {
                let key = AttrKey::for_fact(t.subject.as_str(), &t.predicate, &t.object, multi_valued);
                SnapshotEntry { name: key.to_string(), key, value: Some(t.object.clone()) }
            })
            .collect();
        Self { entries }
    }

    pub fn entries(&self) -> &[SnapshotEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, name: &str) -> Option<&SnapshotEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Value of a named attribute, `None` when absent or unknown.
    pub fn value(&self, name: &str) -> Option<&Value> {
        self.get(name).and_then(|e| e.value.as_ref())
    }

    pub fn present(&self) -> impl Iterator<Item = (&AttrKey, &Value)> {
        self.entries.iter().filter_map(|e| e.value.as_ref().map(|v| (&e.key, v)))
    }

    /// First present value whose predicate is one of `predicates`.
    pub fn find_by_predicate(&self, predicates: &[String]) -> Option<&Value> {
        predicates.iter().find_map(|p| {
            self.entries.iter().find(|e| &e.key.predicate == p && e.value.is_some()).and_then(|e| e.value.as_ref())
        })
    }

    pub fn without(&self, predicate: &str) -> Self {
        Self { entries: self.entries.iter().filter(|e| e.key.predicate != predicate).cloned().collect() }
    }
}
