//! Virtual actuators answering service invocations with scripted behavior.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use homectx_core::bus::{Bus, ReplyStatus, Request, Responder, WeakBus};
use homectx_core::clock::Stamp;
use homectx_core::event::{Event, EventKind};
use homectx_core::services::{AbstractServiceType, ServiceDescriptor, ServiceManager};
use homectx_core::value::Value;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::SimError;

/// Scripted response of one method.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Behavior {
    /// Device state reported in the reply.
    #[serde(default)]
    pub state: Option<String>,
    /// Service event raised while handling the call.
    #[serde(default)]
    pub emit: Option<String>,
    /// Always fail with this reason.
    #[serde(default)]
    pub fail: Option<String>,
    /// Never answer; the caller times out.
    #[serde(default)]
    pub silent: bool,
    /// Virtual service time before the reply.
    #[serde(default)]
    pub delay_ms: u64,
    /// Probability of an injected fault, drawn from the seeded generator.
    #[serde(default)]
    pub failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct DeviceSpec {
    #[serde(flatten)]
    pub descriptor: ServiceDescriptor,
    #[serde(default)]
    pub behavior: BTreeMap<String, Behavior>,
}

/// Service types plus the devices implementing them.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registry {
    #[serde(default)]
    pub types: Vec<AbstractServiceType>,
    pub devices: Vec<DeviceSpec>,
}

impl Registry {
    pub fn load(path: &Path) -> Result<Registry, SimError> {
        let text = fs::read_to_string(path).map_err(|source| SimError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|e| SimError::Json { path: path.to_path_buf(), message: e.to_string() })
    }
}

/// One invocation seen by a device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceCall {
    pub stamp: Stamp,
    pub correlation: u64,
    pub service: String,
    pub method: String,
    pub args: Vec<Value>,
    pub outcome: String,
}

#[derive(Debug, Clone)]
pub struct VirtualDevice {
    pub descriptor: ServiceDescriptor,
    behavior: BTreeMap<String, Behavior>,
    log: Arc<Mutex<Vec<DeviceCall>>>,
    rng: Arc<Mutex<ChaCha8Rng>>,
}

impl VirtualDevice {
    pub fn new(spec: DeviceSpec, seed: u64) -> Self {
        VirtualDevice {
            descriptor: spec.descriptor,
            behavior: spec.behavior,
            log: Arc::new(Mutex::new(Vec::new())),
            rng: Arc::new(Mutex::new(ChaCha8Rng::seed_from_u64(seed))),
        }
    }

    pub fn calls(&self) -> Vec<DeviceCall> {
        self.log.lock().expect("device log").clone()
    }

    fn handle(&self, req: &Request, bus: &WeakBus) -> Option<homectx_core::bus::Reply> {
        let inv = &req.invocation;
        let b = self.behavior.get(&inv.method).cloned().unwrap_or_default();
        let injected = b.failure_rate > 0.0 && self.rng.lock().expect("device rng").gen_bool(b.failure_rate.min(1.0));
        let (reply, outcome) = if b.silent {
            (None, "silent".to_string())
        } else if let Some(why) = b.fail.clone().or_else(|| injected.then(|| "injected fault".to_string())) {
            let mut r = req.reply(ReplyStatus::Failed(why.clone()), None);
            r.delay_ms = b.delay_ms;
            (Some(r), format!("failed: {why}"))
        } else {
            let mut r = req.reply(ReplyStatus::Ok, b.state.clone());
            r.delay_ms = b.delay_ms;
            (Some(r), format!("ok {}", b.state.as_deref().unwrap_or("-")))
        };
        self.log.lock().expect("device log").push(DeviceCall {
            stamp: req.issued,
            correlation: req.correlation,
            service: inv.service.clone(),
            method: inv.method.clone(),
            args: inv.args.clone(),
            outcome,
        });
        if let (Some(name), Some(_), Some(bus)) = (&b.emit, &reply, bus.upgrade()) {
            let ev = Event::new(EventKind::Service, name.clone(), req.issued)
                .with_var("device", Value::text(self.descriptor.id.clone()))
                .with_var("method", Value::text(inv.method.clone()));
            bus.publish_event(ev, &self.descriptor.id);
        }
        reply
    }

    pub fn responder(&self, bus: &Bus) -> Responder {
        let me = self.clone();
        let weak = bus.downgrade();
        Arc::new(move |req| me.handle(req, &weak))
    }
}

/// Registers the registry's types and devices and connects each device to
/// the bus. Device `i` draws faults from a generator seeded with `seed + i`.
pub fn install(
    registry: &Registry,
    services: &ServiceManager,
    bus: &Bus,
    seed: u64,
) -> Result<Vec<VirtualDevice>, SimError> {
    for t in &registry.types {
        services.register_type(t.clone());
    }
    let mut devices = Vec::with_capacity(registry.devices.len());
    for (i, spec) in registry.devices.iter().enumerate() {
        for (method, b) in &spec.behavior {
            if !(0.0..=1.0).contains(&b.failure_rate) {
                return Err(SimError::Scenario(format!(
                    "device {}: failure rate of {method} outside [0,1]",
                    spec.descriptor.id
                )));
            }
        }
        let device = VirtualDevice::new(spec.clone(), seed.wrapping_add(i as u64));
        services.register_service(device.descriptor.clone())?;
        services.attach_responder(&device.descriptor.id, device.responder(bus))?;
        devices.push(device);
    }
    Ok(devices)
}
