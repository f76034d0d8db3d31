//! Registry of abstract service types and concrete providers, location-aware
//! provider selection, and invocation over the bus.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use log::warn;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{Bus, BusError, Invocation, ReplyStatus, Responder, Response};
use crate::clock::Stamp;
use crate::snapshot::ContextSnapshot;
use crate::value::Value;
use crate::zone::ZoneMap;

pub const DEFAULT_TIMEOUT_MS: u64 = 1_000;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("service id {0} already registered")]
    DuplicateId(String),
    #[error("unknown service {0}")]
    UnknownService(String),
    #[error("no available provider of {0}")]
    NoProvider(String),
    #[error("{service} does not support method {method}")]
    UnsupportedMethod { service: String, method: String },
    #[error("{id} lacks methods required by its type: {missing:?}")]
    MissingMethods { id: String, missing: Vec<String> },
    #[error("service registry: {0}")]
    Parse(String),
    #[error(transparent)]
    Bus(#[from] BusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceState {
    #[default]
    Available,
    Busy,
    Offline,
}

impl fmt::Display for ServiceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ServiceState::Available => "available",
            ServiceState::Busy => "busy",
            ServiceState::Offline => "offline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractServiceType {
    pub name: String,
    #[serde(default)]
    pub required_methods: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub id: String,
    #[serde(rename = "type")]
    pub service_type: String,
    pub entity: String,
    #[serde(default)]
    pub zone: Option<String>,
    pub capabilities: Vec<String>,
    #[serde(default)]
    pub state: ServiceState,
}

impl ServiceDescriptor {
    pub fn topic(&self) -> String {
        service_topic(&self.id)
    }
}

pub fn service_topic(id: &str) -> String {
    format!("service/{id}")
}

/// A provider chosen for an abstract type.
#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    pub service_type: String,
    pub descriptor: ServiceDescriptor,
    pub rationale: String,
}

/// Chooses among the available providers of one type.
pub trait SelectionPolicy: Send + Sync {
    fn select<'a>(
        &self,
        candidates: &[&'a ServiceDescriptor],
        user_zone: Option<&str>,
    ) -> Option<(&'a ServiceDescriptor, String)>;
}

/// Same zone as the user first, then the lowest id.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZoneFirstPolicy;

impl SelectionPolicy for ZoneFirstPolicy {
    fn select<'a>(
        &self,
        candidates: &[&'a ServiceDescriptor],
        user_zone: Option<&str>,
    ) -> Option<(&'a ServiceDescriptor, String)> {
        let same_zone = |d: &ServiceDescriptor| match (user_zone, &d.zone) {
            (Some(u), Some(z)) => u.eq_ignore_ascii_case(z),
            _ => false,
        };
        let pick = candidates.iter().copied().min_by(|a, b| same_zone(b).cmp(&same_zone(a)).then(a.id.cmp(&b.id)))?;
        let why = if same_zone(pick) {
            format!("same zone {}", user_zone.unwrap_or_default())
        } else {
            "lowest id".to_string()
        };
        Some((pick, why))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorRecord {
    pub stamp: Stamp,
    pub correlation: Option<u64>,
    pub device: String,
    pub service: String,
    pub method: String,
    pub args: Vec<Value>,
    pub outcome: String,
}

impl fmt::Display for ActuatorRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(Value::to_string).collect();
        let corr = self.correlation.map(|c| format!("#{c}")).unwrap_or_else(|| "#-".into());
        write!(
            f,
            "{} {corr} {} {}:{}({}) -> {}",
            self.stamp,
            self.device,
            self.service,
            self.method,
            args.join(","),
            self.outcome
        )
    }
}

pub struct ServiceManager {
    bus: Bus,
    types: RwLock<BTreeMap<String, AbstractServiceType>>,
    services: RwLock<BTreeMap<String, ServiceDescriptor>>,
    policy: Box<dyn SelectionPolicy>,
    log: Mutex<Vec<ActuatorRecord>>,
    zones: ZoneMap,
    location_predicates: Vec<String>,
    timeout_ms: u64,
}

impl fmt::Debug for ServiceManager {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServiceManager").field("services", &self.services.read().len()).finish()
    }
}

impl ServiceManager {
    pub fn new(bus: Bus) -> Self {
        ServiceManager {
            bus,
            types: RwLock::new(BTreeMap::new()),
            services: RwLock::new(BTreeMap::new()),
            policy: Box::new(ZoneFirstPolicy),
            log: Mutex::new(Vec::new()),
            zones: ZoneMap::default(),
            location_predicates: vec!["User_Locatedin".into(), "Location".into(), "locatedIn".into()],
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn with_policy(mut self, policy: Box<dyn SelectionPolicy>) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_zones(mut self, zones: ZoneMap, location_predicates: Vec<String>) -> Self {
        self.zones = zones;
        self.location_predicates = location_predicates;
        self
    }

    pub fn with_timeout(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn register_type(&self, t: AbstractServiceType) {
        self.types.write().insert(t.name.clone(), t);
    }

    pub fn types(&self) -> Vec<AbstractServiceType> {
        self.types.read().values().cloned().collect()
    }

    pub fn register_service(&self, d: ServiceDescriptor) -> Result<(), ServiceError> {
        let mut services = self.services.write();
        if services.contains_key(&d.id) {
            return Err(ServiceError::DuplicateId(d.id));
        }
        {
            let mut types = self.types.write();
            match types.get(&d.service_type) {
                Some(t) => {
                    let missing: Vec<String> =
                        t.required_methods.iter().filter(|m| !d.capabilities.contains(m)).cloned().collect();
                    if !missing.is_empty() {
                        return Err(ServiceError::MissingMethods { id: d.id, missing });
                    }
                }
                None => {
                    warn!("service type {} was not declared; registering it", d.service_type);
                    types.insert(
                        d.service_type.clone(),
                        AbstractServiceType { name: d.service_type.clone(), required_methods: Vec::new() },
                    );
                }
            }
        }
        services.insert(d.id.clone(), d);
        Ok(())
    }

    /// Connects the request handler answering calls for service `id`.
    pub fn attach_responder(&self, id: &str, responder: Responder) -> Result<(), ServiceError> {
        if !self.services.read().contains_key(id) {
            return Err(ServiceError::UnknownService(id.to_string()));
        }
        self.bus.register_responder(&service_topic(id), responder)?;
        Ok(())
    }

    /// Removes the descriptor and its responder; bindings still holding it
    /// fail with `NoResponder` when invoked.
    pub fn unregister(&self, id: &str) -> Result<ServiceDescriptor, ServiceError> {
        let d = self.services.write().remove(id).ok_or_else(|| ServiceError::UnknownService(id.to_string()))?;
        self.bus.remove_responder(&d.topic());
        Ok(d)
    }

    pub fn set_state(&self, id: &str, state: ServiceState) -> Result<(), ServiceError> {
        let mut services = self.services.write();
        let d = services.get_mut(id).ok_or_else(|| ServiceError::UnknownService(id.to_string()))?;
        d.state = state;
        Ok(())
    }

    pub fn list(&self) -> Vec<ServiceDescriptor> {
        self.services.read().values().cloned().collect()
    }

    pub fn get(&self, id: &str) -> Option<ServiceDescriptor> {
        self.services.read().get(id).cloned()
    }

    pub fn user_zone(&self, ctx: &ContextSnapshot) -> Option<String> {
        ctx.find_by_predicate(&self.location_predicates).and_then(|v| self.zones.zone_of(v)).map(|m| m.zone)
    }

    pub fn discover_and_select(&self, service_type: &str, ctx: &ContextSnapshot) -> Result<Binding, ServiceError> {
        let zone = self.user_zone(ctx);
        let services = self.services.read();
        let candidates: Vec<&ServiceDescriptor> = services
            .values()
            .filter(|d| d.service_type == service_type && d.state == ServiceState::Available)
            .collect();
        let (d, rationale) = self
            .policy
            .select(&candidates, zone.as_deref())
            .ok_or_else(|| ServiceError::NoProvider(service_type.to_string()))?;
        Ok(Binding { service_type: service_type.to_string(), descriptor: d.clone(), rationale })
    }

    /// Requirements with no available provider. A requirement is met by a
    /// service of that type or by a service hosted on an entity of that
    /// name.
    pub fn missing_types(&self, required: &[String]) -> Vec<String> {
        let services = self.services.read();
        required
            .iter()
            .filter(|t| {
                !services
                    .values()
                    .any(|d| (&d.service_type == *t || &d.entity == *t) && d.state == ServiceState::Available)
            })
            .cloned()
            .collect()
    }

    /// Calls `service:method(args)` on the bound provider and records the
    /// outcome in the actuator log.
    pub fn invoke(
        &self,
        binding: &Binding,
        service: &str,
        method: &str,
        args: Vec<Value>,
    ) -> Result<Response, ServiceError> {
        let d = &binding.descriptor;
        if !d.capabilities.iter().any(|m| m == method) {
            return Err(ServiceError::UnsupportedMethod { service: d.id.clone(), method: method.to_string() });
        }
        let invocation = Invocation { service: service.to_string(), method: method.to_string(), args: args.clone() };
        let result = self.bus.request(&d.topic(), invocation, self.timeout_ms, "service-manager");
        let (correlation, outcome, stamp) = match &result {
            Ok(r) => {
                let outcome = match (&r.status, &r.state) {
                    (ReplyStatus::Ok, Some(s)) => format!("ok state={s}"),
                    (ReplyStatus::Ok, None) => "ok".to_string(),
                    (ReplyStatus::Failed(why), _) => format!("failed: {why}"),
                };
                (Some(r.correlation), outcome, r.stamp)
            }
            Err(BusError::Timeout { correlation, .. }) => {
                (Some(*correlation), "timeout".into(), self.bus.clock().now())
            }
            Err(e) => (None, format!("error: {e}"), self.bus.clock().now()),
        };
        self.log.lock().push(ActuatorRecord {
            stamp,
            correlation,
            device: d.id.clone(),
            service: service.to_string(),
            method: method.to_string(),
            args,
            outcome,
        });
        Ok(result?)
    }

    pub fn actuator_log(&self) -> Vec<ActuatorRecord> {
        self.log.lock().clone()
    }

    /// Registers every descriptor of a JSON array.
    pub fn load_registry(&self, json: &str) -> Result<usize, ServiceError> {
        let list: Vec<ServiceDescriptor> =
            serde_json::from_str(json).map_err(|e| ServiceError::Parse(e.to_string()))?;
        let n = list.len();
        for d in list {
            self.register_service(d)?;
        }
        Ok(n)
    }
}

/// Responder that answers every call with OK and a fixed state.
pub fn echo_responder(state: &str) -> Responder {
    let state = state.to_string();
    Arc::new(move |req| Some(req.reply(ReplyStatus::Ok, Some(state.clone()))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;
    use crate::snapshot::{AttrKey, SnapshotEntry};

    fn desc(id: &str, ty: &str, zone: &str) -> ServiceDescriptor {
        ServiceDescriptor {
            id: id.into(),
            service_type: ty.into(),
            entity: format!("Device:{id}"),
            zone: Some(zone.into()),
            capabilities: vec!["Play".into(), "Start".into()],
            state: ServiceState::Available,
        }
    }

    fn at(room: &str) -> ContextSnapshot {
        let key = AttrKey::new("User:Ni", "User_Locatedin");
        ContextSnapshot::new(vec![SnapshotEntry { name: "Location".into(), key, value: Some(Value::entity(room)) }])
    }

    fn manager() -> ServiceManager {
        ServiceManager::new(Bus::new(VirtualClock::default()))
    }

    #[test]
    fn same_zone_preferred() {
        let m = manager();
        m.register_service(desc("CDPlayer", "media_rendering", "Bedroom")).unwrap();
        m.register_service(desc("SmartTV", "media_rendering", "LivingRoom")).unwrap();
        let b = m.discover_and_select("media_rendering", &at("Room:LivingRoom_1")).unwrap();
        assert_eq!(b.descriptor.id, "SmartTV");
        let b = m.discover_and_select("media_rendering", &ContextSnapshot::default()).unwrap();
        assert_eq!(b.descriptor.id, "CDPlayer");
    }

    #[test]
    fn duplicates_offline_and_unregister() {
        let m = manager();
        m.register_service(desc("TV", "media", "LivingRoom")).unwrap();
        assert!(matches!(m.register_service(desc("TV", "media", "Bedroom")), Err(ServiceError::DuplicateId(_))));
        m.set_state("TV", ServiceState::Offline).unwrap();
        assert!(matches!(
            m.discover_and_select("media", &ContextSnapshot::default()),
            Err(ServiceError::NoProvider(_))
        ));
        m.unregister("TV").unwrap();
        assert!(m.list().is_empty());
    }

    #[test]
    fn invoke_logs_and_checks_methods() {
        let m = manager();
        m.register_service(desc("AC1", "Air_Conditioner_Controller", "Bedroom")).unwrap();
        m.attach_responder("AC1", echo_responder("on")).unwrap();
        let b = m.discover_and_select("Air_Conditioner_Controller", &ContextSnapshot::default()).unwrap();
        let r = m.invoke(&b, "Air_Conditioner", "Start", vec![]).unwrap();
        assert_eq!(r.state.as_deref(), Some("on"));
        assert!(matches!(
            m.invoke(&b, "Air_Conditioner", "Explode", vec![]),
            Err(ServiceError::UnsupportedMethod { .. })
        ));
        let log = m.actuator_log();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].correlation, Some(r.correlation));
        m.unregister("AC1").unwrap();
        assert!(matches!(
            m.invoke(&b, "Air_Conditioner", "Start", vec![]),
            Err(ServiceError::Bus(BusError::NoResponder(_)))
        ));
    }

    #[test]
    fn missing_required_methods() {
        let m = manager();
        m.register_type(AbstractServiceType { name: "Light".into(), required_methods: vec!["On".into()] });
        assert!(matches!(m.register_service(desc("L1", "Light", "Bedroom")), Err(ServiceError::MissingMethods { .. })));
    }
}
