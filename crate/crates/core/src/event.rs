//! Primitive events consumed by ECA rules.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clock::Stamp;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// Raised by the kernel itself (task lifecycle, system variables).
    Internal,
    /// Delivered from a context source.
    Context,
    /// Fired by the virtual clock.
    Time,
    /// Raised while invoking a device service.
    Service,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Internal => "internal",
            EventKind::Context => "context",
            EventKind::Time => "time",
            EventKind::Service => "service",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    /// Dotted name, e.g. `Bed_pressure_Sensor.triggered`.
    pub name: String,
    #[serde(default)]
    pub variables: BTreeMap<String, Value>,
    #[serde(default)]
    pub stamp: Stamp,
}

impl Event {
    pub fn new(kind: EventKind, name: impl Into<String>, stamp: Stamp) -> Self {
        Self { kind, name: name.into(), variables: BTreeMap::new(), stamp }
    }

    pub fn with_var(mut self, name: impl Into<String>, value: Value) -> Self {
        self.variables.insert(name.into(), value);
        self
    }

    /// Bus topic the event is published on.
    pub fn topic(&self) -> String {
        event_topic(&self.name)
    }
}

pub fn event_topic(name: &str) -> String {
    format!("event/{name}")
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.variables.is_empty() {
            let vars: Vec<String> = self.variables.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "{{{}}}", vars.join(","))?;
        }
        Ok(())
    }
}
