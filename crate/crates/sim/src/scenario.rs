//! Scenario scripts: a timeline of context changes and events replayed on the
//! virtual clock through the full kernel, followed by assertions on the
//! actuator log, the trace and the final store.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use homectx_core::bus::Bus;
use homectx_core::cbr::{load_case_base, CaseBase, CaseBaseLayout};
use homectx_core::clock::{Stamp, VirtualClock};
use homectx_core::eca::parse_file;
use homectx_core::event::{Event, EventKind};
use homectx_core::kernel::{Kernel, KernelConfig};
use homectx_core::scheduler::TaskInstance;
use homectx_core::services::{ActuatorRecord, ServiceManager, ServiceState};
use homectx_core::snapshot::ContextSnapshot;
use homectx_core::store::{ContextStore, ProviderId, ProviderKind, Triple, TriplePattern};
use homectx_core::task::{TaskId, TaskLibrary};
use homectx_core::value::Value;
use homectx_core::zone::ZoneMap;

use crate::devices::{install, Registry};
use crate::SimError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub description: String,
    /// Task library JSON.
    pub tasks: PathBuf,
    /// Case base CSV; templates derived from the library when absent.
    #[serde(default)]
    pub cases: Option<PathBuf>,
    /// Device registry JSON.
    pub services: PathBuf,
    /// Rule files armed for the whole run.
    #[serde(default)]
    pub rules: Vec<PathBuf>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub step_budget_ms: Option<u64>,
    #[serde(default)]
    pub zones: Option<Vec<String>>,
    /// Context providers joined before the timeline starts, as `kind:id`.
    #[serde(default)]
    pub providers: Vec<String>,
    pub timeline: Vec<Step>,
    /// Clock position after the last step.
    #[serde(default)]
    pub end: Option<String>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Step {
    /// `HH:MM[:SS[.mmm]]`.
    pub at: String,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Assert {
        subject: String,
        predicate: String,
        object: Value,
        provider: String,
    },
    Retract {
        #[serde(default)]
        subject: Option<String>,
        #[serde(default)]
        predicate: Option<String>,
        #[serde(default)]
        object: Option<Value>,
    },
    Join(String),
    Leave(String),
    Event {
        name: String,
        #[serde(default = "context_kind")]
        kind: EventKind,
        #[serde(default)]
        vars: BTreeMap<String, Value>,
    },
    TimeEvent {
        at: String,
        name: String,
    },
    Infer {
        #[serde(default = "yes")]
        submit: bool,
    },
    Submit(String),
    Learn(String),
    SetState {
        service: String,
        state: ServiceState,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assertion {
    /// A successful call of `service:method` is (or is not) in the actuator log.
    Actuated {
        service: String,
        method: String,
        #[serde(default = "yes")]
        present: bool,
    },
    /// Successful calls, given as `Service:Method`, appear in this order.
    ActuatedSequence(Vec<String>),
    TraceContains(String),
    TraceAbsent(String),
    /// Trace lines containing these fragments appear in this order.
    TraceOrder(Vec<String>),
    Fact {
        subject: String,
        predicate: String,
        #[serde(default)]
        equals: Option<Value>,
    },
    /// Some inference accepted this task.
    Inferred(String),
    /// Final state of the latest instance of a task.
    Instance {
        task: String,
        state: String,
    },
    NoErrors,
}

fn yes() -> bool {
    true
}

fn context_kind() -> EventKind {
    EventKind::Context
}

/// Parses `HH:MM[:SS[.mmm]]` into a stamp.
pub fn parse_stamp(s: &str) -> Result<Stamp, SimError> {
    let bad = || SimError::Scenario(format!("bad time `{s}`, expected HH:MM[:SS[.mmm]]"));
    let (hms, ms) = match s.split_once('.') {
        Some((a, b)) if b.len() == 3 => (a, b.parse::<u64>().map_err(|_| bad())?),
        Some(_) => return Err(bad()),
        None => (s, 0),
    };
    let parts: Vec<u64> = hms.split(':').map(|p| p.parse::<u64>().map_err(|_| bad())).collect::<Result<_, _>>()?;
    let (h, m, sec) = match parts.as_slice() {
        [h, m] => (*h, *m, 0),
        [h, m, sec] => (*h, *m, *sec),
        _ => return Err(bad()),
    };
    if m > 59 || sec > 59 {
        return Err(bad());
    }
    Ok(Stamp(((h * 60 + m) * 60 + sec) * 1000 + ms))
}

impl Scenario {
    /// Loads a scenario; relative paths inside it are resolved against the
    /// scenario file's directory.
    pub fn load(path: &Path) -> Result<Scenario, SimError> {
        let text = fs::read_to_string(path).map_err(|source| SimError::Io { path: path.to_path_buf(), source })?;
        let mut scn: Scenario = serde_json::from_str(&text)
            .map_err(|e| SimError::Json { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut scn.tasks);
        fix(&mut scn.services);
        if let Some(c) = scn.cases.as_mut() {
            fix(c);
        }
        scn.rules.iter_mut().for_each(fix);
        scn.validate()?;
        Ok(scn)
    }

    /// Timeline times parse and never decrease.
    pub fn validate(&self) -> Result<(), SimError> {
        let mut last = Stamp::ZERO;
        for step in &self.timeline {
            let t = parse_stamp(&step.at)?;
            if t < last {
                return Err(SimError::Scenario(format!("timeline goes back in time at {}", step.at)));
            }
            last = t;
            if let Action::TimeEvent { at, .. } = &step.action {
                parse_stamp(at)?;
            }
        }
        if let Some(end) = &self.end {
            if parse_stamp(end)? < last {
                return Err(SimError::Scenario(format!("end {end} precedes the last step")));
            }
        }
        Ok(())
    }

    /// Replaces the object of every assertion of `subject.predicate` in the
    /// timeline; returns how many were replaced.
    pub fn override_fact(&mut self, subject: &str, predicate: &str, value: Value) -> usize {
        let mut n = 0;
        for step in &mut self.timeline {
            if let Action::Assert { subject: s, predicate: p, object, .. } = &mut step.action {
                if s == subject && p == predicate {
                    *object = value.clone();
                    n += 1;
                }
            }
        }
        n
    }
}

/// Command-line overrides of scenario settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub theta: Option<f64>,
    pub zones: Option<Vec<String>>,
    /// Record every bus message.
    pub bus_log: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitReport {
    pub name: String,
    pub trace: Vec<String>,
    pub actuations: Vec<ActuatorRecord>,
    pub bus_log: Vec<String>,
    /// Tasks accepted by inference, in order.
    pub inferred: Vec<TaskId>,
    pub instances: Vec<TaskInstance>,
    /// Kernel errors such as step timeouts.
    pub errors: Vec<String>,
    /// Failed assertions, in scenario order.
    pub failures: Vec<String>,
}

impl ExitReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn actuator_lines(&self) -> Vec<String> {
        self.actuations.iter().map(ToString::to_string).collect()
    }

    /// Successful calls as `Service:Method`, in order.
    pub fn successful_calls(&self) -> Vec<String> {
        self.actuations
            .iter()
            .filter(|r| r.outcome.starts_with("ok"))
            .map(|r| format!("{}:{}", r.service, r.method))
            .collect()
    }
}

/// Builds the kernel described by a scenario, with providers joined and
/// standing rules armed.
pub fn build_kernel(scn: &Scenario, opts: &RunOptions) -> Result<Kernel, SimError> {
    let bus = Bus::new(VirtualClock::new(Stamp::ZERO));
    if opts.bus_log {
        bus.enable_tap();
    }
    let mut layout = CaseBaseLayout::default();
    if let Some(z) = opts.zones.clone().or_else(|| scn.zones.clone()) {
        layout.zones = ZoneMap::new(z);
    }
    let store = Arc::new(ContextStore::with_multi_valued(bus.clone(), layout.multi_valued.clone()));
    let services =
        Arc::new(ServiceManager::new(bus.clone()).with_zones(layout.zones.clone(), layout.location_predicates.clone()));
    let registry = Registry::load(&scn.services)?;
    install(&registry, &services, &bus, opts.seed.unwrap_or(scn.seed))?;

    let lib = Arc::new(TaskLibrary::load_definitions(&scn.tasks)?);
    let (templates, mut cfg) = CaseBase::from_library(&lib, layout.clone());
    let cases = match &scn.cases {
        Some(path) => load_case_base(path, layout)?,
        None => templates,
    };
    if let Some(theta) = opts.theta.or(scn.theta) {
        cfg = cfg.with_theta(theta);
    }
    let config = KernelConfig { step_budget_ms: scn.step_budget_ms, ..KernelConfig::default() };
    let mut kernel = Kernel::new(bus, store, services, lib, cases, cfg, config);

    for path in &scn.rules {
        let src = fs::read_to_string(path).map_err(|source| SimError::Io { path: path.clone(), source })?;
        let file = parse_file(&src).map_err(|e| SimError::Scenario(format!("{}: {e}", path.display())))?;
        kernel.add_standing_rules(file.sets)?;
    }
    for p in &scn.providers {
        let id: ProviderId = p.parse().map_err(SimError::Scenario)?;
        kernel.join_provider(id)?;
    }
    Ok(kernel)
}

fn provider(kernel: &Kernel, id: &str) -> Result<ProviderId, SimError> {
    kernel
        .store()
        .providers()
        .into_iter()
        .find(|p| p.id == id)
        .ok_or_else(|| SimError::Scenario(format!("provider `{id}` has not joined")))
}

fn apply(kernel: &mut Kernel, action: &Action, inferred: &mut Vec<TaskId>) -> Result<(), SimError> {
    match action {
        Action::Assert { subject, predicate, object, provider: pid } => {
            let p = provider(kernel, pid)?;
            kernel.assert_fact(subject, predicate, object.clone(), &p)?;
        }
        Action::Retract { subject, predicate, object } => {
            let pattern = TriplePattern::new(subject.as_deref(), predicate.as_deref(), object.clone())?;
            kernel.store().retract(&pattern);
            kernel.pump();
        }
        Action::Join(p) => {
            let id: ProviderId = p.parse().map_err(SimError::Scenario)?;
            kernel.join_provider(id)?;
        }
        Action::Leave(id) => {
            kernel.leave_provider(id)?;
        }
        Action::Event { name, kind, vars } => {
            let mut ev = Event::new(*kind, name.clone(), kernel.clock().now());
            ev.variables = vars.clone();
            kernel.inject_event(ev, "scenario");
        }
        Action::TimeEvent { at, name } => kernel.schedule_time_event(parse_stamp(at)?, name),
        Action::Infer { submit } => {
            let result = if *submit { kernel.infer_and_submit()?.0 } else { kernel.infer() };
            if let (true, Some(task)) = (result.accepted, result.solution()) {
                inferred.push(task.clone());
            }
        }
        Action::Submit(task) => {
            kernel.submit(&TaskId::parse(task)?)?;
        }
        Action::Learn(task) => {
            let snapshot = kernel.store().snapshot_all();
            kernel.case_base_mut().learn_case(&snapshot, TaskId::parse(task)?)?;
        }
        Action::SetState { service, state } => kernel.services().set_state(service, *state)?,
    }
    Ok(())
}

fn subsequence(haystack: &[String], needles: &[String], contains: bool) -> Result<(), String> {
    let mut from = 0;
    for n in needles {
        let hit = haystack[from..].iter().position(|h| if contains { h.contains(n.as_str()) } else { h == n });
        match hit {
            Some(i) => from += i + 1,
            None => return Err(format!("`{n}` missing after position {from}")),
        }
    }
    Ok(())
}

fn check(a: &Assertion, kernel: &Kernel, report: &ExitReport) -> Result<(), String> {
    match a {
        Assertion::Actuated { service, method, present } => {
            let want = format!("{service}:{method}");
            let found = report.successful_calls().contains(&want);
            if found == *present {
                Ok(())
            } else if *present {
                Err(format!("{want} was never actuated"))
            } else {
                Err(format!("{want} was actuated"))
            }
        }
        Assertion::ActuatedSequence(seq) => subsequence(&report.successful_calls(), seq, false),
        Assertion::TraceContains(s) => {
            report.trace.iter().any(|l| l.contains(s.as_str())).then_some(()).ok_or(format!("trace lacks `{s}`"))
        }
        Assertion::TraceAbsent(s) => match report.trace.iter().find(|l| l.contains(s.as_str())) {
            Some(l) => Err(format!("trace has `{l}`")),
            None => Ok(()),
        },
        Assertion::TraceOrder(seq) => subsequence(&report.trace, seq, true),
        Assertion::Fact { subject, predicate, equals } => {
            let pattern = TriplePattern::new(Some(subject), Some(predicate), None).map_err(|e| e.to_string())?;
            let found = kernel.store().query_pattern(&pattern);
            match (equals, found.first()) {
                (_, None) => Err(format!("no fact {subject}.{predicate}")),
                (Some(v), Some(_)) if !found.iter().any(|t| &t.object == v) => {
                    Err(format!("{subject}.{predicate} is {} not {v}", found[0].object))
                }
                _ => Ok(()),
            }
        }
        Assertion::Inferred(task) => {
            let id = TaskId::parse(task).map_err(|e| e.to_string())?;
            report.inferred.contains(&id).then_some(()).ok_or(format!("{task} was never inferred"))
        }
        Assertion::Instance { task, state } => {
            let id = TaskId::parse(task).map_err(|e| e.to_string())?;
            match report.instances.iter().rev().find(|i| i.task == id) {
                Some(i) if i.state.to_string() == *state => Ok(()),
                Some(i) => Err(format!("#{}:{task} is {} not {state}", i.id, i.state)),
                None => Err(format!("{task} was never submitted")),
            }
        }
        Assertion::NoErrors => match report.errors.first() {
            Some(e) => Err(format!("kernel error: {e}")),
            None => Ok(()),
        },
    }
}

/// Replays the timeline, then evaluates the assertions.
pub fn run_scenario(scn: &Scenario, opts: &RunOptions) -> Result<ExitReport, SimError> {
    scn.validate()?;
    let mut kernel = build_kernel(scn, opts)?;
    let mut inferred = Vec::new();
    for step in &scn.timeline {
        kernel.advance_to(parse_stamp(&step.at)?)?;
        apply(&mut kernel, &step.action, &mut inferred)?;
    }
    if let Some(end) = &scn.end {
        kernel.advance_to(parse_stamp(end)?)?;
    }
    let mut report = ExitReport {
        name: scn.name.clone(),
        trace: kernel.trace_lines().to_vec(),
        actuations: kernel.services().actuator_log(),
        bus_log: kernel.bus().tap_lines(),
        inferred,
        instances: kernel.scheduler().all_instances(),
        errors: kernel.errors().to_vec(),
        failures: Vec::new(),
    };
    for (i, a) in scn.assertions.iter().enumerate() {
        if let Err(why) = check(a, &kernel, &report) {
            report.failures.push(format!("assertion {}: {why}", i + 1));
        }
    }
    Ok(report)
}

#[derive(Debug, Deserialize)]
struct SnapshotFact {
    subject: String,
    predicate: String,
    object: Value,
}

/// Reads a JSON array of `{subject, predicate, object}` facts as a snapshot.
pub fn load_snapshot(path: &Path, multi_valued: &BTreeSet<String>) -> Result<ContextSnapshot, SimError> {
    let src = fs::read_to_string(path).map_err(|source| SimError::Io { path: path.to_path_buf(), source })?;
    let facts: Vec<SnapshotFact> =
        serde_json::from_str(&src).map_err(|e| SimError::Json { path: path.to_path_buf(), message: e.to_string() })?;
    let provider = ProviderId::new("snapshot", ProviderKind::SoftwareSim);
    let triples: Vec<Triple> =
        facts.iter().map(|f| Triple::new(&f.subject, &f.predicate, f.object.clone(), &provider, Stamp::ZERO)).collect();
    Ok(ContextSnapshot::from_triples(&triples, multi_valued))
}

/// Loads and runs a scenario file.
pub fn run_file(path: &Path, opts: &RunOptions) -> Result<ExitReport, SimError> {
    run_scenario(&Scenario::load(path)?, opts)
}
