//! In-process topic bus with publish/subscribe and request/response.
//!
//! Delivery model: every subscription owns a FIFO queue. `publish` appends the
//! message to the queue of every matching subscription (in subscription order)
//! and then drains those queues. A subscription's handler is never entered
//! twice at the same time; a publish issued from inside a handler, or from
//! another thread while the handler runs, is queued and picked up by the
//! thread that is already draining. Messages are therefore delivered exactly
//! once and in publish order per (topic, subscriber).
//!
//! Requests bypass the queues: a topic has at most one responder, called
//! synchronously. A responder that does not answer, or answers later than the
//! timeout, makes the request fail with `Timeout` and moves the virtual clock
//! to the deadline.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Weak};

use parking_lot::{Mutex, RwLock};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::{Stamp, VirtualClock};
use crate::event::Event;
use crate::store::ContextChange;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("invalid topic `{0}`")]
    InvalidTopic(String),
    #[error("invalid subscription pattern `{0}`")]
    InvalidPattern(String),
    #[error("no responder registered on `{0}`")]
    NoResponder(String),
    #[error("request {correlation} on `{topic}` timed out at {deadline}")]
    Timeout { topic: String, correlation: u64, deadline: Stamp },
    #[error("request timeout must be positive")]
    InvalidTimeout,
    #[error("responder on `{0}` already registered")]
    DuplicateResponder(String),
    #[error("reply correlation {got} does not match outstanding request {expected}")]
    CorrelationMismatch { expected: u64, got: u64 },
}

/// Concrete slash-separated topic, e.g. `context/Temperature`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Topic(String);

impl Topic {
    pub fn new(s: impl Into<String>) -> Result<Self, BusError> {
        let s = s.into();
        if s.is_empty() || s.contains('*') || s.split('/').any(str::is_empty) {
            return Err(BusError::InvalidTopic(s));
        }
        Ok(Self(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Subscription pattern: an exact topic, or a prefix ending in `/*` (or a
/// bare `*` matching everything).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopicPattern {
    Exact(String),
    Prefix(String),
}

impl TopicPattern {
    pub fn parse(s: &str) -> Result<Self, BusError> {
        if s == "*" {
            return Ok(TopicPattern::Prefix(String::new()));
        }
        if let Some(prefix) = s.strip_suffix("/*") {
            Topic::new(prefix).map_err(|_| BusError::InvalidPattern(s.to_string()))?;
            return Ok(TopicPattern::Prefix(format!("{prefix}/")));
        }
        Topic::new(s).map(|t| TopicPattern::Exact(t.0)).map_err(|_| BusError::InvalidPattern(s.to_string()))
    }

    pub fn matches(&self, topic: &str) -> bool {
        match self {
            TopicPattern::Exact(t) => t == topic,
            TopicPattern::Prefix(p) => topic.starts_with(p.as_str()),
        }
    }
}

impl fmt::Display for TopicPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopicPattern::Exact(t) => f.write_str(t),
            TopicPattern::Prefix(p) if p.is_empty() => f.write_str("*"),
            TopicPattern::Prefix(p) => write!(f, "{p}*"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    Context,
    Event,
    Request,
    Response,
    Notice,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageKind::Context => "context",
            MessageKind::Event => "event",
            MessageKind::Request => "request",
            MessageKind::Response => "response",
            MessageKind::Notice => "notice",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Headers {
    pub kind: MessageKind,
    pub source: String,
    pub stamp: Stamp,
}

/// A service call carried by a request.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub service: String,
    pub method: String,
    pub args: Vec<Value>,
}

impl fmt::Display for Invocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(Value::to_string).collect();
        write!(f, "{}:{}({})", self.service, self.method, args.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Event(Event),
    Context(ContextChange),
    Invocation(Invocation),
    Text(String),
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Event(e) => write!(f, "event {e}"),
            Payload::Context(c) => write!(f, "{c}"),
            Payload::Invocation(i) => write!(f, "invoke {i}"),
            Payload::Text(t) => f.write_str(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub topic: Topic,
    pub headers: Headers,
    pub payload: Payload,
}

impl Message {
    pub fn new(topic: Topic, kind: MessageKind, source: &str, stamp: Stamp, payload: Payload) -> Self {
        Self { topic, headers: Headers { kind, source: source.to_string(), stamp }, payload }
    }
}

/// Short stable digest of a payload, used by the bus log.
pub fn payload_digest(payload: &impl fmt::Display) -> String {
    let hash = Sha256::digest(payload.to_string().as_bytes());
    hash[..6].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct Request {
    pub correlation: u64,
    pub topic: String,
    pub source: String,
    pub invocation: Invocation,
    pub issued: Stamp,
    pub deadline: Stamp,
}

impl Request {
    pub fn reply(&self, status: ReplyStatus, state: Option<String>) -> Reply {
        Reply { correlation: self.correlation, status, state, delay_ms: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplyStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub correlation: u64,
    pub status: ReplyStatus,
    pub state: Option<String>,
    /// Virtual service time before the reply arrives.
    pub delay_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub correlation: u64,
    pub topic: String,
    pub status: ReplyStatus,
    pub state: Option<String>,
    pub stamp: Stamp,
}

impl Response {
    pub fn is_ok(&self) -> bool {
        self.status == ReplyStatus::Ok
    }
}

pub type Responder = Arc<dyn Fn(&Request) -> Option<Reply> + Send + Sync>;
type Handler = Box<dyn FnMut(&Message) + Send>;

struct Subscriber {
    pattern: TopicPattern,
    queue: Mutex<VecDeque<Arc<Message>>>,
    handler: Mutex<Handler>,
    cancelled: AtomicBool,
}

impl Subscriber {
    fn drain(&self) {
        loop {
            let Some(mut handler) = self.handler.try_lock() else {
                return;
            };
            loop {
                let next = self.queue.lock().pop_front();
                match next {
                    Some(m) if !self.cancelled.load(Ordering::Acquire) => handler(&m),
                    Some(_) => {}
                    None => break,
                }
            }
            drop(handler);
            if self.queue.lock().is_empty() {
                return;
            }
        }
    }
}

struct Inner {
    clock: VirtualClock,
    subs: RwLock<BTreeMap<u64, Arc<Subscriber>>>,
    responders: RwLock<HashMap<String, Responder>>,
    outstanding: Mutex<BTreeSet<u64>>,
    next_sub: AtomicU64,
    next_correlation: AtomicU64,
    tap: Mutex<Option<Vec<String>>>,
}

/// Cheaply cloneable handle to one bus.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<Inner>,
}

/// Non-owning bus handle for responders that publish back into the bus.
#[derive(Clone)]
pub struct WeakBus(Weak<Inner>);

impl WeakBus {
    pub fn upgrade(&self) -> Option<Bus> {
        self.0.upgrade().map(|inner| Bus { inner })
    }
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bus")
            .field("subscriptions", &self.inner.subs.read().len())
            .field("responders", &self.inner.responders.read().len())
            .finish()
    }
}

impl Bus {
    pub fn new(clock: VirtualClock) -> Self {
        Self {
            inner: Arc::new(Inner {
                clock,
                subs: RwLock::new(BTreeMap::new()),
                responders: RwLock::new(HashMap::new()),
                outstanding: Mutex::new(BTreeSet::new()),
                next_sub: AtomicU64::new(1),
                next_correlation: AtomicU64::new(1),
                tap: Mutex::new(None),
            }),
        }
    }

    pub fn clock(&self) -> &VirtualClock {
        &self.inner.clock
    }

    pub fn downgrade(&self) -> WeakBus {
        WeakBus(Arc::downgrade(&self.inner))
    }

    /// Start recording one log line per message.
    pub fn enable_tap(&self) {
        let mut tap = self.inner.tap.lock();
        if tap.is_none() {
            *tap = Some(Vec::new());
        }
    }

    pub fn tap_lines(&self) -> Vec<String> {
        self.inner.tap.lock().clone().unwrap_or_default()
    }

    fn tap(&self, stamp: Stamp, topic: &str, kind: MessageKind, source: &str, digest: &str) {
        if let Some(lines) = self.inner.tap.lock().as_mut() {
            lines.push(format!("{stamp} {topic} {kind} {source} {digest}"));
        }
    }

    /// Deliver to every matching subscription; returns the number of
    /// subscriptions the message was queued for.
    pub fn publish(&self, message: Message) -> usize {
        self.tap(
            message.headers.stamp,
            message.topic.as_str(),
            message.headers.kind,
            &message.headers.source,
            &payload_digest(&message.payload),
        );
        let message = Arc::new(message);
        let targets: Vec<Arc<Subscriber>> =
            self.inner.subs.read().values().filter(|s| s.pattern.matches(message.topic.as_str())).cloned().collect();
        for sub in &targets {
            sub.queue.lock().push_back(Arc::clone(&message));
        }
        for sub in &targets {
            sub.drain();
        }
        targets.len()
    }

    /// Convenience: publish an event on `event/<name>`.
    pub fn publish_event(&self, event: Event, source: &str) -> usize {
        let topic = Topic::new(event.topic()).expect("event names form valid topics");
        let stamp = event.stamp;
        self.publish(Message::new(topic, MessageKind::Event, source, stamp, Payload::Event(event)))
    }

    pub fn subscribe(
        &self,
        pattern: &str,
        handler: impl FnMut(&Message) + Send + 'static,
    ) -> Result<SubscriptionHandle, BusError> {
        let parsed = TopicPattern::parse(pattern)?;
        let id = self.inner.next_sub.fetch_add(1, Ordering::Relaxed);
        let sub = Arc::new(Subscriber {
            pattern: parsed.clone(),
            queue: Mutex::new(VecDeque::new()),
            handler: Mutex::new(Box::new(handler)),
            cancelled: AtomicBool::new(false),
        });
        self.inner.subs.write().insert(id, sub);
        Ok(SubscriptionHandle { id, pattern: parsed, bus: Arc::downgrade(&self.inner) })
    }

    pub fn subscription_count(&self) -> usize {
        self.inner.subs.read().len()
    }

    pub fn register_responder(&self, topic: &str, responder: Responder) -> Result<(), BusError> {
        let topic = Topic::new(topic)?;
        let mut map = self.inner.responders.write();
        if map.contains_key(topic.as_str()) {
            return Err(BusError::DuplicateResponder(topic.0));
        }
        map.insert(topic.0, responder);
        Ok(())
    }

    pub fn remove_responder(&self, topic: &str) -> bool {
        self.inner.responders.write().remove(topic).is_some()
    }

    pub fn has_responder(&self, topic: &str) -> bool {
        self.inner.responders.read().contains_key(topic)
    }

    /// Correlated request/response with a virtual-time timeout.
    pub fn request(
        &self,
        topic: &str,
        invocation: Invocation,
        timeout_ms: u64,
        source: &str,
    ) -> Result<Response, BusError> {
        if timeout_ms == 0 {
            return Err(BusError::InvalidTimeout);
        }
        let responder =
            self.inner.responders.read().get(topic).cloned().ok_or_else(|| BusError::NoResponder(topic.to_string()))?;
        let correlation = self.inner.next_correlation.fetch_add(1, Ordering::Relaxed);
        let issued = self.inner.clock.now();
        let request = Request {
            correlation,
            topic: topic.to_string(),
            source: source.to_string(),
            invocation,
            issued,
            deadline: issued.saturating_add(timeout_ms),
        };
        self.inner.outstanding.lock().insert(correlation);
        self.tap(
            issued,
            topic,
            MessageKind::Request,
            source,
            &payload_digest(&format!("{correlation} {}", request.invocation)),
        );

        let reply = responder(&request);
        self.inner.outstanding.lock().remove(&correlation);
        match reply {
            Some(reply) if reply.delay_ms < timeout_ms => {
                if reply.correlation != correlation {
                    return Err(BusError::CorrelationMismatch { expected: correlation, got: reply.correlation });
                }
                let stamp = if reply.delay_ms > 0 {
                    self.inner.clock.advance_by(reply.delay_ms)
                } else {
                    self.inner.clock.now()
                };
                let state = reply.state.clone().unwrap_or_default();
                self.tap(
                    stamp,
                    topic,
                    MessageKind::Response,
                    topic,
                    &payload_digest(&format!("{correlation} {:?} {state}", reply.status)),
                );
                Ok(Response { correlation, topic: topic.to_string(), status: reply.status, state: reply.state, stamp })
            }
            _ => {
                // the clock may already be past the deadline if the responder
                // advanced it itself; either way we end at or after it
                let _ = self.inner.clock.advance_to(request.deadline);
                self.tap(
                    self.inner.clock.now(),
                    topic,
                    MessageKind::Notice,
                    "bus",
                    &payload_digest(&format!("timeout {correlation}")),
                );
                Err(BusError::Timeout { topic: topic.to_string(), correlation, deadline: request.deadline })
            }
        }
    }

    pub fn outstanding_requests(&self) -> usize {
        self.inner.outstanding.lock().len()
    }
}

/// Returned by [`Bus::subscribe`]. Dropping it keeps the subscription alive;
/// call [`SubscriptionHandle::cancel`] to remove it.
#[derive(Debug)]
pub struct SubscriptionHandle {
    id: u64,
    pattern: TopicPattern,
    bus: Weak<Inner>,
}

impl SubscriptionHandle {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn pattern(&self) -> &TopicPattern {
        &self.pattern
    }

    /// Remove the subscription. Queued but undelivered messages are dropped.
    pub fn cancel(&self) -> bool {
        let Some(inner) = self.bus.upgrade() else {
            return false;
        };
        let removed = inner.subs.write().remove(&self.id);
        match removed {
            Some(sub) => {
                sub.cancelled.store(true, Ordering::Release);
                sub.queue.lock().clear();
                true
            }
            None => false,
        }
    }
}

impl fmt::Debug for Inner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BusInner")
    }
}
