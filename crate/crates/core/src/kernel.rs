//! Runtime composition: context store, bus, service manager, case-based
//! reasoner, scheduler and rule engine driven by one event loop on a
//! virtual clock.
//!
//! Context assertions are republished as context events named
//! `subject.predicate`, carrying the new object under that name. A run
//! that starts raises the internal event `<task name>.started`; a finished
//! one raises `Procedure.completed`.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::bus::{Bus, Payload, SubscriptionHandle, Topic};
use crate::cbr::{CaseBase, CbrError, MatchResult, SimilarityConfig};
use crate::clock::{ClockError, Stamp, VirtualClock};
use crate::eca::condition::{evaluate_condition, literal_value};
use crate::eca::{
    flatten_contract, ActionSpec, Dispatched, Engine, EngineError, ExecutionTrace, Mode, Owner, ProcedureRun, Progress,
    RuleSet, RunStatus, Runtime, TraceEntry,
};
use crate::event::{event_topic, Event, EventKind};
use crate::scheduler::{Outcome, SchedError, Scheduler, TaskInstance};
use crate::services::{ServiceError, ServiceManager};
use crate::store::{ChangeOp, ContextReader, ContextStore, ProviderId, StoreError, Triple};
use crate::task::{TaskId, TaskLibrary};
use crate::value::Value;

pub const PROCEDURE_COMPLETED: &str = "Procedure.completed";
/// Appended to a task name to form the event raised when its run starts.
pub const STARTED_SUFFIX: &str = ".started";

/// Upper bound on inbox entries handled by one pump, against rule cycles.
const PUMP_LIMIT: usize = 100_000;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Cbr(#[from] CbrError),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    /// Virtual-time budget per procedure step; `None` waits forever.
    pub step_budget_ms: Option<u64>,
    /// Instances allowed to run at once.
    pub parallel: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { step_budget_ms: None, parallel: 1 }
    }
}

struct KernelRuntime<'a> {
    store: &'a ContextStore,
    services: &'a ServiceManager,
}

impl Runtime for KernelRuntime<'_> {
    fn context(&self) -> &dyn ContextReader {
        self.store
    }

    fn dispatch(&mut self, action: &ActionSpec) -> Dispatched {
        let snapshot = self.store.snapshot_all();
        let binding = match self.services.discover_and_select(&action.provider, &snapshot) {
            Ok(b) => b,
            Err(e) => return Dispatched { reached: false, outcome: format!("error: {e}") },
        };
        let args: Vec<Value> = action.args.iter().map(literal_value).collect();
        let device = binding.descriptor.id.clone();
        match self.services.invoke(&binding, &action.service, &action.method, args) {
            Ok(r) if r.is_ok() => {
                let state = r.state.map(|s| format!(" state={s}")).unwrap_or_default();
                Dispatched { reached: true, outcome: format!("{device} ok{state}") }
            }
            Ok(r) => Dispatched { reached: true, outcome: format!("{device} {:?}", r.status) },
            Err(ServiceError::UnsupportedMethod { .. }) => {
                Dispatched { reached: false, outcome: format!("error: {device} lacks {}", action.method) }
            }
            Err(e) => Dispatched { reached: true, outcome: format!("{device} error: {e}") },
        }
    }
}

pub struct Kernel {
    clock: VirtualClock,
    bus: Bus,
    store: Arc<ContextStore>,
    services: Arc<ServiceManager>,
    lib: Arc<TaskLibrary>,
    cases: CaseBase,
    similarity: SimilarityConfig,
    scheduler: Scheduler,
    engine: Engine,
    config: KernelConfig,
    runs: BTreeMap<u64, ProcedureRun>,
    emitted: BTreeMap<u64, usize>,
    standing: Vec<RuleSet>,
    standing_trace: ExecutionTrace,
    standing_emitted: usize,
    trace: Vec<String>,
    sched_seen: usize,
    timers: BTreeMap<(Stamp, u64), Event>,
    timer_seq: u64,
    errors: Vec<String>,
    _bridge: SubscriptionHandle,
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Kernel")
            .field("now", &self.clock.now())
            .field("runs", &self.runs.len())
            .field("trace", &self.trace.len())
            .finish()
    }
}

impl Kernel {
    /// Builds a kernel around an existing bus, store and service manager,
    /// which must share `bus`.
    pub fn new(
        bus: Bus,
        store: Arc<ContextStore>,
        services: Arc<ServiceManager>,
        lib: Arc<TaskLibrary>,
        cases: CaseBase,
        similarity: SimilarityConfig,
        config: KernelConfig,
    ) -> Kernel {
        let clock = bus.clock().clone();
        let weak = bus.downgrade();
        let bridge = bus
            .subscribe("context/*", move |m| {
                let (Payload::Context(change), Some(bus)) = (&m.payload, weak.upgrade()) else { return };
                if change.op != ChangeOp::Asserted {
                    return;
                }
                let t = &change.triple;
                let name = format!("{}.{}", t.subject, t.predicate);
                if Topic::new(event_topic(&name)).is_err() {
                    log::warn!("context change {name} cannot be named as an event");
                    return;
                }
                let ev = Event::new(EventKind::Context, name.clone(), t.stamp)
                    .with_var(name, t.object.clone())
                    .with_var("value", t.object.clone());
                bus.publish_event(ev, &t.provider.id);
            })
            .expect("static pattern");
        let scheduler = Scheduler::with_parallel(Arc::clone(&lib), clock.clone(), config.parallel);
        let engine = Engine::new(bus.clone());
        Kernel {
            clock,
            bus,
            store,
            services,
            lib,
            cases,
            similarity,
            scheduler,
            engine,
            config,
            runs: BTreeMap::new(),
            emitted: BTreeMap::new(),
            standing: Vec::new(),
            standing_trace: ExecutionTrace::default(),
            standing_emitted: 0,
            trace: Vec::new(),
            sched_seen: 0,
            timers: BTreeMap::new(),
            timer_seq: 0,
            errors: Vec::new(),
            _bridge: bridge,
        }
    }

    pub fn clock(&self) -> &VirtualClock {
        &self.clock
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn store(&self) -> &ContextStore {
        &self.store
    }

    pub fn services(&self) -> &ServiceManager {
        &self.services
    }

    pub fn library(&self) -> &TaskLibrary {
        &self.lib
    }

    pub fn case_base(&self) -> &CaseBase {
        &self.cases
    }

    pub fn case_base_mut(&mut self) -> &mut CaseBase {
        &mut self.cases
    }

    pub fn similarity(&self) -> &SimilarityConfig {
        &self.similarity
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn run(&self, instance: u64) -> Option<&ProcedureRun> {
        self.runs.get(&instance)
    }

    pub fn runs(&self) -> impl Iterator<Item = &ProcedureRun> {
        self.runs.values()
    }

    /// Reactions of the standing rule sets.
    pub fn standing_trace(&self) -> &ExecutionTrace {
        &self.standing_trace
    }

    /// Every trace line so far, in the order produced.
    pub fn trace_lines(&self) -> &[String] {
        &self.trace
    }

    /// Procedure and kernel failures, e.g. unsatisfied requirements.
    pub fn errors(&self) -> &[String] {
        &self.errors
    }

    /// Rule sets that stay armed for the kernel's lifetime.
    pub fn add_standing_rules(&mut self, sets: Vec<RuleSet>) -> Result<(), KernelError> {
        for set in sets {
            let idx = self.standing.len();
            self.engine.compile_subscriptions(&set, Owner::Standing(idx))?;
            self.standing.push(set);
        }
        Ok(())
    }

    pub fn join_provider(&mut self, provider: ProviderId) -> Result<(), KernelError> {
        self.store.provider_join(provider)?;
        Ok(())
    }

    pub fn leave_provider(&mut self, provider_id: &str) -> Result<usize, KernelError> {
        let n = self.store.provider_leave(provider_id)?;
        self.pump();
        Ok(n)
    }

    /// Asserts a fact stamped now and processes the resulting events.
    pub fn assert_fact(
        &mut self,
        subject: &str,
        predicate: &str,
        object: Value,
        provider: &ProviderId,
    ) -> Result<(), KernelError> {
        let t = Triple::new(subject, predicate, object, provider, self.clock.now());
        self.store.assert_triple(t)?;
        self.pump();
        Ok(())
    }

    /// Publishes `event` stamped now and processes the consequences.
    pub fn inject_event(&mut self, mut event: Event, source: &str) {
        event.stamp = self.clock.now();
        self.bus.publish_event(event, source);
        self.pump();
    }

    /// Queues a time event fired when the clock reaches `at`.
    pub fn schedule_time_event(&mut self, at: Stamp, name: &str) {
        self.timer_seq += 1;
        self.timers.insert((at, self.timer_seq), Event::new(EventKind::Time, name, at));
    }

    /// Moves the clock to `t`, firing due timers and step deadlines in
    /// time order on the way.
    pub fn advance_to(&mut self, t: Stamp) -> Result<(), KernelError> {
        if t < self.clock.now() {
            return Err(ClockError { now: self.clock.now(), requested: t }.into());
        }
        loop {
            let timer = self.timers.keys().next().map(|k| k.0).filter(|&at| at <= t);
            let deadline = self.next_deadline().filter(|&d| d <= t);
            let next = match (timer, deadline) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => break,
            };
            self.clock.advance_to(next.max(self.clock.now()))?;
            self.expire_deadlines();
            while let Some(entry) = self.timers.first_entry() {
                if entry.key().0 > next {
                    break;
                }
                let ev = entry.remove();
                self.bus.publish_event(ev, "clock");
                self.pump();
            }
        }
        self.clock.advance_to(t)?;
        self.expire_deadlines();
        self.pump();
        Ok(())
    }

    fn next_deadline(&self) -> Option<Stamp> {
        self.runs.values().filter(|r| *r.status() == RunStatus::Active).filter_map(ProcedureRun::deadline).min()
    }

    fn expire_deadlines(&mut self) {
        let now = self.clock.now();
        let due: Vec<u64> = self
            .runs
            .values()
            .filter(|r| r.deadline().is_some_and(|d| d <= now) && *r.status() == RunStatus::Active)
            .map(ProcedureRun::instance)
            .collect();
        for id in due {
            let run = self.runs.get_mut(&id).expect("listed run");
            if let Some(err) = run.check_deadline(now) {
                self.errors.push(format!("#{id}: {err}"));
            }
            self.flush_run(id);
            self.finish_run(id, false);
        }
    }

    /// Ranks the case base against the current context; the winner's
    /// usage counter is bumped when accepted.
    pub fn infer(&mut self) -> MatchResult {
        let snapshot = self.store.snapshot_all();
        let result = self.cases.retrieve_best(&snapshot, &self.similarity);
        let summary = match result.best() {
            Some(b) => format!(
                "case {} -> {} S={:.3} {}",
                b.case_id,
                b.task,
                b.similarity,
                if result.accepted { "accepted" } else { "rejected" }
            ),
            None => "no candidate".to_string(),
        };
        let zone = result.zone.clone().unwrap_or_else(|| "*".into());
        self.trace.push(format!("{} | reasoner zone {zone} | infer | {summary}", self.clock.now()));
        result
    }

    /// Infers and submits the accepted task unless an instance of it is
    /// already live.
    pub fn infer_and_submit(&mut self) -> Result<(MatchResult, Option<u64>), KernelError> {
        let result = self.infer();
        let Some(task) = result.solution().filter(|_| result.accepted).cloned() else {
            return Ok((result, None));
        };
        if self.scheduler.snapshot().iter().any(|i| i.task == task) {
            return Ok((result, None));
        }
        let id = self.submit(&task)?;
        Ok((result, Some(id)))
    }

    pub fn submit(&mut self, task: &TaskId) -> Result<u64, KernelError> {
        let (id, out) = self.scheduler.submit(task)?;
        self.apply(out);
        self.pump();
        Ok(id)
    }

    /// Aborts a live instance and releases its subscriptions.
    pub fn abort(&mut self, instance: u64) -> Result<(), KernelError> {
        if let Some(run) = self.runs.get_mut(&instance) {
            run.fail(self.clock.now(), "aborted");
            self.flush_run(instance);
        }
        self.engine.release_where(|o| matches!(o, Owner::Run { instance: i, .. } if *i == instance));
        let out = self.scheduler.abort(instance)?;
        self.apply(out);
        self.pump();
        Ok(())
    }

    pub fn live_instances(&self) -> Vec<TaskInstance> {
        self.scheduler.snapshot()
    }

    /// Processes queued inbox entries until none remain.
    pub fn pump(&mut self) {
        let mut handled = 0;
        while let Some(inbound) = self.engine.pop() {
            handled += 1;
            if handled > PUMP_LIMIT {
                self.errors.push(format!("event loop stopped after {PUMP_LIMIT} entries"));
                break;
            }
            match inbound.owner {
                Owner::Run { instance, step } => self.offer_run(instance, step, &inbound.event),
                Owner::Standing(idx) => self.react_standing(idx, &inbound.event),
            }
            self.sync_sched();
        }
    }

    fn offer_run(&mut self, instance: u64, step: usize, event: &Event) {
        let now = self.clock.now();
        let Some(run) = self.runs.get_mut(&instance) else { return };
        let mut rt = KernelRuntime { store: &self.store, services: &self.services };
        let progress = run.offer(step, event, now, &mut rt);
        self.flush_run(instance);
        if progress == Progress::Completed {
            self.finish_run(instance, true);
        }
    }

    fn react_standing(&mut self, idx: usize, event: &Event) {
        let now = self.clock.now();
        let set = &self.standing[idx];
        let mut rt = KernelRuntime { store: &self.store, services: &self.services };
        for (r, rule) in set.rules.iter().enumerate().filter(|(_, r)| r.event.name == event.name) {
            let base = TraceEntry {
                stamp: now,
                state: format!("standing S{} R{}", idx + 1, r + 1),
                step: None,
                rule: Some(r),
                event: event.to_string(),
                action: String::new(),
                condition: None,
                dispatched: false,
            };
            let held = match evaluate_condition(rule.condition.as_ref(), event, rt.context()) {
                Ok(true) => true,
                Ok(false) => {
                    if set.mode != Mode::Choice {
                        self.standing_trace.entries.push(TraceEntry {
                            action: "skip (condition false)".into(),
                            condition: Some(false),
                            ..base.clone()
                        });
                    }
                    false
                }
                Err(e) => {
                    self.standing_trace
                        .entries
                        .push(TraceEntry { action: format!("skip (condition error: {e})"), ..base.clone() });
                    false
                }
            };
            if !held {
                continue;
            }
            for a in &rule.actions {
                let d = rt.dispatch(a);
                self.standing_trace.entries.push(TraceEntry {
                    action: format!("{a} -> {}", d.outcome),
                    condition: Some(true),
                    dispatched: d.reached,
                    ..base.clone()
                });
            }
            if set.mode == Mode::Choice {
                break;
            }
        }
        for e in &self.standing_trace.entries[self.standing_emitted..] {
            self.trace.push(e.to_string());
        }
        self.standing_emitted = self.standing_trace.entries.len();
    }

    /// Copies a run's new trace entries into the kernel trace.
    fn flush_run(&mut self, instance: u64) {
        let Some(run) = self.runs.get(&instance) else { return };
        let seen = self.emitted.entry(instance).or_insert(0);
        for e in &run.trace().entries[*seen..] {
            self.trace.push(e.to_string());
        }
        *seen = run.trace().entries.len();
    }

    fn sync_sched(&mut self) {
        let transitions = self.scheduler.transitions();
        for t in &transitions[self.sched_seen..] {
            self.trace.push(t.to_string());
        }
        self.sched_seen = transitions.len();
    }

    /// Applies a scheduler outcome to the affected runs.
    fn apply(&mut self, out: Outcome) {
        self.sync_sched();
        let now = self.clock.now();
        for id in out.suspended {
            if let Some(run) = self.runs.get_mut(&id) {
                run.suspend(now);
                self.flush_run(id);
            }
        }
        for d in out.dispatched {
            if d.resumed {
                if let Some(run) = self.runs.get_mut(&d.instance) {
                    run.resume(now);
                    self.flush_run(d.instance);
                }
            } else {
                self.start_run(d.instance, &d.task);
            }
        }
    }

    fn start_run(&mut self, instance: u64, task: &TaskId) {
        let now = self.clock.now();
        let (steps, requirements) = match flatten_contract(&self.lib, task) {
            Ok(x) => x,
            Err(e) => {
                self.errors.push(format!("#{instance}: {e}"));
                let mut run = ProcedureRun::new(instance, task.clone(), Vec::new(), None);
                run.fail(now, &e.to_string());
                self.runs.insert(instance, run);
                self.flush_run(instance);
                self.finish_run(instance, false);
                return;
            }
        };
        let mut run = ProcedureRun::new(instance, task.clone(), steps, self.config.step_budget_ms);
        let missing = self.services.missing_types(&requirements);
        if !missing.is_empty() {
            let err = EngineError::RequirementUnsatisfied(missing);
            self.errors.push(format!("#{instance}: {err}"));
            run.fail(now, &err.to_string());
            self.runs.insert(instance, run);
            self.flush_run(instance);
            self.finish_run(instance, false);
            return;
        }
        for (step, set) in run.steps().iter().enumerate() {
            if let Err(e) = self.engine.compile_subscriptions(set, Owner::Run { instance, step }) {
                self.errors.push(format!("#{instance}: {e}"));
                run.fail(now, &e.to_string());
                self.runs.insert(instance, run);
                self.flush_run(instance);
                self.finish_run(instance, false);
                return;
            }
        }
        let progress = run.start(now);
        self.runs.insert(instance, run);
        self.flush_run(instance);
        if progress == Progress::Completed {
            self.finish_run(instance, true);
            return;
        }
        let name = match self.lib.task(task) {
            Ok(t) => format!("{}{STARTED_SUFFIX}", t.name),
            Err(_) => return,
        };
        if Topic::new(event_topic(&name)).is_ok() {
            let ev = Event::new(EventKind::Internal, name, now)
                .with_var("task", Value::text(task.as_str()))
                .with_var("instance", Value::number(instance as f64));
            self.bus.publish_event(ev, "kernel");
        }
    }

    fn finish_run(&mut self, instance: u64, completed: bool) {
        self.engine.release_where(|o| matches!(o, Owner::Run { instance: i, .. } if *i == instance));
        let result = if completed { self.scheduler.complete(instance) } else { self.scheduler.abort(instance) };
        let out = match result {
            Ok(out) => out,
            Err(e) => {
                self.errors.push(format!("#{instance}: {e}"));
                return;
            }
        };
        if completed {
            let task = self.runs.get(&instance).map(|r| r.task().to_string()).unwrap_or_default();
            let ev = Event::new(EventKind::Internal, PROCEDURE_COMPLETED, self.clock.now())
                .with_var("task", Value::text(task))
                .with_var("instance", Value::number(instance as f64));
            self.bus.publish_event(ev, "kernel");
        }
        self.apply(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{ReplyStatus, Responder};
    use crate::cbr::CaseBaseLayout;
    use crate::eca::parse_rules;
    use crate::services::{echo_responder, ServiceDescriptor, ServiceState};
    use crate::store::ProviderKind;
    use crate::task::{Procedure, Task, TaskContract, TaskKind};

    const CONTRACT: &str = "
        rules for <S> { When Bed.triggered THEN DO <Dispatcher>.Msg:Send(); }
        rules for <PDA> { When User.up THEN DO <Display>.Weather:Play();
                          When User.up If Room.Temp < 20 THEN DO <Ac>.Ac:Start(); }
    ";

    fn library() -> Arc<TaskLibrary> {
        let task = |id: &str, pr: u8| Task {
            id: TaskId::parse(id).unwrap(),
            name: format!("T{id}"),
            condition: Default::default(),
            priority: pr,
            contract: TaskId::parse(id).unwrap(),
            kind: if id == "1" { TaskKind::Root } else { TaskKind::Atomic },
        };
        let contract = |id: &str, src: &str, reqs: &[&str]| TaskContract {
            id: TaskId::parse(id).unwrap(),
            name: format!("C{id}"),
            parent_task: Some(TaskId::parse("1").unwrap()),
            requirement: reqs.iter().map(|s| s.to_string()).collect(),
            procedure: Procedure::Steps(crate::eca::parse_file(src).unwrap()),
        };
        Arc::new(
            TaskLibrary::from_parts(
                vec![task("1", 0), task("1.1", 3), task("1.2", 9)],
                vec![
                    contract("1.1", CONTRACT, &["PDA"]),
                    contract("1.2", "rules { When Alarm.off THEN DO <Siren>.Siren:Stop(); }", &[]),
                ],
            )
            .unwrap(),
        )
    }

    fn device(services: &ServiceManager, id: &str, ty: &str, methods: &[&str]) {
        services
            .register_service(ServiceDescriptor {
                id: id.into(),
                service_type: ty.into(),
                entity: id.into(),
                zone: None,
                capabilities: methods.iter().map(|m| m.to_string()).collect(),
                state: ServiceState::Available,
            })
            .unwrap();
        services.attach_responder(id, echo_responder("done")).unwrap();
    }

    fn kernel(with_pda: bool) -> Kernel {
        let bus = Bus::new(VirtualClock::default());
        let store = Arc::new(ContextStore::new(bus.clone()));
        let services = Arc::new(ServiceManager::new(bus.clone()));
        let weak = bus.downgrade();
        services
            .register_service(ServiceDescriptor {
                id: "dispatcher".into(),
                service_type: "Dispatcher".into(),
                entity: "dispatcher".into(),
                zone: None,
                capabilities: vec!["Send".into()],
                state: ServiceState::Available,
            })
            .unwrap();
        let responder: Responder = Arc::new(move |req| {
            if let Some(bus) = weak.upgrade() {
                bus.publish_event(Event::new(EventKind::Service, "User.up", req.issued), "dispatcher");
            }
            Some(req.reply(ReplyStatus::Ok, None))
        });
        services.attach_responder("dispatcher", responder).unwrap();
        device(&services, "display", "Display", &["Play"]);
        device(&services, "ac", "Ac", &["Start"]);
        device(&services, "siren", "Siren", &["Stop"]);
        if with_pda {
            device(&services, "pda", "PDA", &["Show"]);
        }
        let lib = library();
        let (cases, sim) = CaseBase::from_library(&lib, CaseBaseLayout::default());
        Kernel::new(bus, store, services, lib, cases, sim, KernelConfig::default())
    }

    fn sensor() -> ProviderId {
        ProviderId::new("thermo", ProviderKind::HardwareSim)
    }

    fn trigger(k: &mut Kernel) {
        k.inject_event(Event::new(EventKind::Context, "Bed.triggered", Stamp(0)), "bed");
    }

    fn actuated(k: &Kernel) -> Vec<String> {
        k.services().actuator_log().iter().map(|r| format!("{}:{}", r.service, r.method)).collect()
    }

    #[test]
    fn one_event_drives_consecutive_steps() {
        let mut k = kernel(true);
        k.join_provider(sensor()).unwrap();
        k.assert_fact("Room", "Temp", Value::number(18.0), &sensor()).unwrap();
        let id = k.submit(&TaskId::parse("1.1").unwrap()).unwrap();
        trigger(&mut k);
        assert_eq!(actuated(&k), vec!["Msg:Send", "Weather:Play", "Ac:Start"]);
        assert_eq!(*k.run(id).unwrap().status(), RunStatus::Completed);
        assert!(k.scheduler().is_idle());
        assert_eq!(k.bus().subscription_count(), 1, "only the context bridge remains");
    }

    #[test]
    fn warm_room_skips_the_conditioner() {
        let mut k = kernel(true);
        k.join_provider(sensor()).unwrap();
        k.assert_fact("Room", "Temp", Value::number(25.0), &sensor()).unwrap();
        k.submit(&TaskId::parse("1.1").unwrap()).unwrap();
        trigger(&mut k);
        assert_eq!(actuated(&k), vec!["Msg:Send", "Weather:Play"]);
    }

    #[test]
    fn missing_requirement_blocks_every_action() {
        let mut k = kernel(false);
        let id = k.submit(&TaskId::parse("1.1").unwrap()).unwrap();
        trigger(&mut k);
        assert!(actuated(&k).is_empty());
        assert!(matches!(k.run(id).unwrap().status(), RunStatus::Failed(r) if r.contains("PDA")));
        assert!(k.errors()[0].contains("PDA"));
    }

    #[test]
    fn preempted_run_resumes_same_step() {
        let mut k = kernel(true);
        let g = k.submit(&TaskId::parse("1.1").unwrap()).unwrap();
        let f = k.submit(&TaskId::parse("1.2").unwrap()).unwrap();
        trigger(&mut k);
        assert!(actuated(&k).is_empty(), "suspended run ignores its events");
        assert_eq!(k.run(g).unwrap().cursor(), (0, 0));
        k.inject_event(Event::new(EventKind::Context, "Alarm.off", Stamp(0)), "panel");
        assert_eq!(*k.run(f).unwrap().status(), RunStatus::Completed);
        assert_eq!(*k.run(g).unwrap().status(), RunStatus::Active);
        assert_eq!(k.run(g).unwrap().cursor(), (0, 0));
        trigger(&mut k);
        // No temperature fact: the conditioner rule's condition is unbound.
        assert_eq!(actuated(&k), vec!["Siren:Stop", "Msg:Send", "Weather:Play"]);
    }

    #[test]
    fn step_budget_times_out_in_virtual_time() {
        let mut k = kernel(true);
        k.config.step_budget_ms = Some(60_000);
        let id = k.submit(&TaskId::parse("1.1").unwrap()).unwrap();
        k.advance_to(Stamp(59_999)).unwrap();
        assert_eq!(*k.run(id).unwrap().status(), RunStatus::Active);
        k.advance_to(Stamp(120_000)).unwrap();
        assert!(matches!(k.run(id).unwrap().status(), RunStatus::Failed(_)));
        assert!(k.trace_lines().iter().any(|l| l.starts_with("00:01:00.000 | #1:1.1 S1/2 | - | failed: step 1")));
    }

    #[test]
    fn timers_and_context_events_reach_standing_rules() {
        let mut k = kernel(true);
        k.add_standing_rules(
            parse_rules(
                "rules { When Room.Temp If Room.Temp > 30 THEN DO <Ac>.Ac:Start(); When wake THEN DO <Display>.Weather:Play(); }",
            )
            .unwrap(),
        )
        .unwrap();
        k.join_provider(sensor()).unwrap();
        k.schedule_time_event(Stamp::from_hm(7, 0), "wake");
        k.assert_fact("Room", "Temp", Value::number(25.0), &sensor()).unwrap();
        k.advance_to(Stamp::from_hm(8, 0)).unwrap();
        k.assert_fact("Room", "Temp", Value::number(31.0), &sensor()).unwrap();
        assert_eq!(actuated(&k), vec!["Weather:Play", "Ac:Start"]);
        let stamps: Vec<Stamp> = k.services().actuator_log().iter().map(|r| r.stamp).collect();
        assert_eq!(stamps, vec![Stamp::from_hm(7, 0), Stamp::from_hm(8, 0)]);
    }
}
