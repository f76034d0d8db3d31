//! Compiles rule sets into bus subscriptions feeding one shared inbox.
//!
//! Each subscription belongs to an [`Owner`]. Bus handlers never run rules
//! themselves: they only append `(owner, event)` to the inbox, and the
//! kernel drains it one entry at a time. An event published once therefore
//! yields one entry per subscribed owner, in subscription order, which lets
//! a single event drive consecutive procedure steps.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use parking_lot::Mutex;
use thiserror::Error;

use super::ast::RuleSet;
use crate::bus::{Bus, BusError, Payload, SubscriptionHandle};
use crate::event::{event_topic, Event};
use crate::task::TaskError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{owner} is already subscribed to `{event}`")]
    DuplicateSubscription { owner: Owner, event: String },
    #[error("no available provider for required service types: {}", .0.join(", "))]
    RequirementUnsatisfied(Vec<String>),
    #[error("step {step} did not complete within {budget_ms} ms")]
    StepTimeout { step: usize, budget_ms: u64 },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// Who an inbox entry is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Owner {
    /// Step `step` of the procedure run of scheduler instance `instance`.
    Run { instance: u64, step: usize },
    /// Always-armed rule set number `index`.
    Standing(usize),
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Run { instance, step } => write!(f, "run #{instance} step {}", step + 1),
            Owner::Standing(i) => write!(f, "standing set {i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inbound {
    pub owner: Owner,
    pub event: Event,
}

pub type Inbox = Arc<Mutex<VecDeque<Inbound>>>;

/// Subscription bookkeeping for all compiled rule sets.
pub struct Engine {
    bus: Bus,
    inbox: Inbox,
    subs: BTreeMap<Owner, Vec<(String, SubscriptionHandle)>>,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine").field("owners", &self.subs.len()).field("queued", &self.inbox.lock().len()).finish()
    }
}

impl Engine {
    pub fn new(bus: Bus) -> Self {
        Engine { bus, inbox: Arc::new(Mutex::new(VecDeque::new())), subs: BTreeMap::new() }
    }

    pub fn inbox(&self) -> &Inbox {
        &self.inbox
    }

    pub fn pop(&self) -> Option<Inbound> {
        self.inbox.lock().pop_front()
    }

    pub fn pending(&self) -> usize {
        self.inbox.lock().len()
    }

    /// One subscription on `event/<name>` per distinct event of `rs`
    /// (stop event included). Nothing is subscribed if any event is already
    /// subscribed for `owner`.
    pub fn compile_subscriptions(&mut self, rs: &RuleSet, owner: Owner) -> Result<usize, EngineError> {
        let names = rs.event_names();
        if let Some(existing) = self.subs.get(&owner) {
            if let Some(dup) = names.iter().find(|n| existing.iter().any(|(e, _)| e == *n)) {
                return Err(EngineError::DuplicateSubscription { owner, event: dup.clone() });
            }
        }
        let mut made = Vec::with_capacity(names.len());
        for name in names {
            let inbox = Arc::clone(&self.inbox);
            let handle = self.bus.subscribe(&event_topic(&name), move |m| {
                if let Payload::Event(event) = &m.payload {
                    inbox.lock().push_back(Inbound { owner, event: event.clone() });
                }
            });
            match handle {
                Ok(h) => made.push((name, h)),
                Err(e) => {
                    for (_, h) in made {
                        h.cancel();
                    }
                    return Err(e.into());
                }
            }
        }
        let count = made.len();
        self.subs.entry(owner).or_default().extend(made);
        Ok(count)
    }

    /// Cancels the owner's subscriptions and drops its queued entries.
    pub fn release(&mut self, owner: Owner) {
        if let Some(list) = self.subs.remove(&owner) {
            for (_, h) in list {
                h.cancel();
            }
        }
        self.inbox.lock().retain(|i| i.owner != owner);
    }

    /// Releases every owner matching `pred`.
    pub fn release_where(&mut self, pred: impl Fn(&Owner) -> bool) {
        let owners: Vec<Owner> = self.subs.keys().copied().filter(|o| pred(o)).collect();
        for o in owners {
            self.release(o);
        }
    }

    pub fn release_all(&mut self) {
        self.release_where(|_| true);
        self.inbox.lock().clear();
    }

    pub fn subscribed_events(&self, owner: Owner) -> Vec<String> {
        self.subs.get(&owner).map(|l| l.iter().map(|(e, _)| e.clone()).collect()).unwrap_or_default()
    }

    pub fn owners(&self) -> Vec<Owner> {
        self.subs.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{Stamp, VirtualClock};
    use crate::eca::parse_rules;
    use crate::event::EventKind;

    fn set(src: &str) -> RuleSet {
        parse_rules(src).unwrap().remove(0)
    }

    #[test]
    fn one_subscription_per_distinct_event() {
        let bus = Bus::new(VirtualClock::default());
        let mut eng = Engine::new(bus.clone());
        let rs = set(
            "rules for <X> { When a.b THEN DO <P>.S:m(); When a.b THEN DO <P>.S:n(); When c.d THEN DO <P>.S:m(); }",
        );
        assert_eq!(eng.compile_subscriptions(&rs, Owner::Standing(0)).unwrap(), 2);
        assert_eq!(bus.subscription_count(), 2);
        bus.publish_event(Event::new(EventKind::Context, "a.b", Stamp(0)), "t");
        assert_eq!(eng.pending(), 1);
        assert!(matches!(
            eng.compile_subscriptions(&rs, Owner::Standing(0)),
            Err(EngineError::DuplicateSubscription { .. })
        ));
        eng.compile_subscriptions(&rs, Owner::Standing(1)).unwrap();
        bus.publish_event(Event::new(EventKind::Context, "a.b", Stamp(0)), "t");
        let owners: Vec<Owner> = std::iter::from_fn(|| eng.pop()).map(|i| i.owner).collect();
        assert_eq!(owners, vec![Owner::Standing(0), Owner::Standing(0), Owner::Standing(1)]);
    }

    #[test]
    fn release_all_silences_the_inbox() {
        let bus = Bus::new(VirtualClock::default());
        let mut eng = Engine::new(bus.clone());
        let rs = set("rules for <X> { When a.b THEN DO <P>.S:m(); }");
        eng.compile_subscriptions(&rs, Owner::Run { instance: 1, step: 0 }).unwrap();
        eng.release_all();
        assert_eq!(bus.subscription_count(), 0);
        bus.publish_event(Event::new(EventKind::Context, "a.b", Stamp(0)), "t");
        assert_eq!(eng.pending(), 0);
    }
}
