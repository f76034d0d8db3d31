//! Priority scheduling of task instances with preemption.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::clock::{Stamp, VirtualClock};
use crate::task::{TaskError, TaskId, TaskLibrary};

#[derive(Debug, Error)]
pub enum SchedError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("instance {0} is unknown")]
    UnknownInstance(u64),
    #[error("instance {0} is not running")]
    NotRunning(u64),
    #[error("instance {0} has already finished")]
    Finished(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceState {
    Pending,
    Running,
    Suspended,
    Completed,
    Aborted,
}

impl InstanceState {
    pub fn is_live(self) -> bool {
        matches!(self, InstanceState::Pending | InstanceState::Running | InstanceState::Suspended)
    }
}

impl fmt::Display for InstanceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InstanceState::Pending => "pending",
            InstanceState::Running => "running",
            InstanceState::Suspended => "suspended",
            InstanceState::Completed => "completed",
            InstanceState::Aborted => "aborted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub id: u64,
    pub task: TaskId,
    pub state: InstanceState,
    pub priority: u8,
}

/// One logged state change; `from` is `None` on submission.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub stamp: Stamp,
    pub instance: u64,
    pub task: TaskId,
    pub from: Option<InstanceState>,
    pub to: InstanceState,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let from = self.from.map(|s| s.to_string()).unwrap_or_else(|| "new".into());
        write!(f, "{} SCHED #{}:{} {from}→{}", self.stamp, self.instance, self.task, self.to)
    }
}

/// An instance that just got the processor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dispatch {
    pub instance: u64,
    pub task: TaskId,
    /// Resumed from suspension rather than started fresh.
    pub resumed: bool,
}

/// Effects of a scheduler call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    pub suspended: Vec<u64>,
    pub dispatched: Vec<Dispatch>,
}

#[derive(Debug)]
pub struct Scheduler {
    lib: Arc<TaskLibrary>,
    clock: VirtualClock,
    parallel: usize,
    instances: BTreeMap<u64, TaskInstance>,
    transitions: Vec<Transition>,
    next_id: u64,
}

impl Scheduler {
    pub fn new(lib: Arc<TaskLibrary>, clock: VirtualClock) -> Self {
        Self::with_parallel(lib, clock, 1)
    }

    pub fn with_parallel(lib: Arc<TaskLibrary>, clock: VirtualClock, parallel: usize) -> Self {
        Scheduler {
            lib,
            clock,
            parallel: parallel.max(1),
            instances: BTreeMap::new(),
            transitions: Vec::new(),
            next_id: 1,
        }
    }

    pub fn library(&self) -> &TaskLibrary {
        &self.lib
    }

    /// `Greater` when instance `a` should run before `b`. Equal urgency
    /// (same task) prefers a suspended instance, then the older one.
    fn urgency(&self, a: &TaskInstance, b: &TaskInstance) -> Ordering {
        self.lib
            .compare_priority(&a.task, &b.task)
            .expect("instances reference library tasks")
            .then_with(|| {
                let susp = |i: &TaskInstance| i.state == InstanceState::Suspended;
                susp(a).cmp(&susp(b))
            })
            .then_with(|| b.id.cmp(&a.id))
    }

    fn set_state(&mut self, id: u64, to: InstanceState) {
        let inst = self.instances.get_mut(&id).expect("known instance");
        let from = inst.state;
        inst.state = to;
        let task = inst.task.clone();
        self.transitions.push(Transition { stamp: self.clock.now(), instance: id, task, from: Some(from), to });
    }

    fn running(&self) -> Vec<&TaskInstance> {
        self.instances.values().filter(|i| i.state == InstanceState::Running).collect()
    }

    pub fn submit(&mut self, task: &TaskId) -> Result<(u64, Outcome), SchedError> {
        let priority = self.lib.task(task)?.priority;
        let id = self.next_id;
        self.next_id += 1;
        let inst = TaskInstance { id, task: task.clone(), state: InstanceState::Pending, priority };
        self.transitions.push(Transition {
            stamp: self.clock.now(),
            instance: id,
            task: task.clone(),
            from: None,
            to: InstanceState::Pending,
        });
        self.instances.insert(id, inst.clone());

        let mut out = Outcome::default();
        let running = self.running();
        if running.len() >= self.parallel {
            let victim = running.into_iter().min_by(|a, b| self.urgency(a, b)).expect("running set is non-empty");
            let more_urgent = self.lib.compare_priority(task, &victim.task)? == Ordering::Greater
                && self.lib.priority_key(task)? > self.lib.priority_key(&victim.task)?;
            if !more_urgent {
                return Ok((id, out));
            }
            let victim = victim.id;
            self.set_state(victim, InstanceState::Suspended);
            out.suspended.push(victim);
        }
        self.set_state(id, InstanceState::Running);
        out.dispatched.push(Dispatch { instance: id, task: task.clone(), resumed: false });
        Ok((id, out))
    }

    pub fn complete(&mut self, id: u64) -> Result<Outcome, SchedError> {
        self.finish(id, InstanceState::Completed, true)
    }

    /// Aborts a live instance in any state.
    pub fn abort(&mut self, id: u64) -> Result<Outcome, SchedError> {
        self.finish(id, InstanceState::Aborted, false)
    }

    fn finish(&mut self, id: u64, to: InstanceState, must_run: bool) -> Result<Outcome, SchedError> {
        let state = self.instances.get(&id).ok_or(SchedError::UnknownInstance(id))?.state;
        if !state.is_live() {
            return Err(SchedError::Finished(id));
        }
        if must_run && state != InstanceState::Running {
            return Err(SchedError::NotRunning(id));
        }
        self.set_state(id, to);
        Ok(self.fill_slots())
    }

    fn fill_slots(&mut self) -> Outcome {
        let mut out = Outcome::default();
        while self.running().len() < self.parallel {
            let next = self
                .instances
                .values()
                .filter(|i| matches!(i.state, InstanceState::Pending | InstanceState::Suspended))
                .max_by(|a, b| self.urgency(a, b))
                .map(|i| (i.id, i.task.clone(), i.state == InstanceState::Suspended));
            let Some((id, task, resumed)) = next else { break };
            self.set_state(id, InstanceState::Running);
            out.dispatched.push(Dispatch { instance: id, task, resumed });
        }
        out
    }

    pub fn instance(&self, id: u64) -> Option<&TaskInstance> {
        self.instances.get(&id)
    }

    /// Live instances, most urgent first.
    pub fn snapshot(&self) -> Vec<TaskInstance> {
        let mut live: Vec<&TaskInstance> = self.instances.values().filter(|i| i.state.is_live()).collect();
        live.sort_by(|a, b| self.urgency(b, a));
        live.into_iter().cloned().collect()
    }

    /// Every instance ever submitted, in submission order.
    pub fn all_instances(&self) -> Vec<TaskInstance> {
        self.instances.values().cloned().collect()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn is_idle(&self) -> bool {
        self.running().is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{ConditionSpec, Task, TaskKind};

    fn lib() -> Arc<TaskLibrary> {
        let t = |id: &str, pr: u8| Task {
            id: TaskId::parse(id).unwrap(),
            name: id.to_string(),
            condition: ConditionSpec::default(),
            priority: pr,
            contract: TaskId::parse(id).unwrap(),
            kind: TaskKind::Atomic,
        };
        Arc::new(
            TaskLibrary::from_parts(
                vec![t("1", 0), t("1.1", 3), t("1.2", 9), t("1.3", 3), t("1.4", 5), t("1.5", 2)],
                vec![],
            )
            .unwrap(),
        )
    }

    fn id(s: &str) -> TaskId {
        TaskId::parse(s).unwrap()
    }

    #[test]
    fn preemption_and_resume() {
        let mut s = Scheduler::new(lib(), VirtualClock::default());
        let (g, out) = s.submit(&id("1.1")).unwrap();
        assert_eq!(out.dispatched.len(), 1);
        let (f, out) = s.submit(&id("1.2")).unwrap();
        assert_eq!(out.suspended, vec![g]);
        let snap: Vec<(u64, InstanceState, u8)> = s.snapshot().iter().map(|i| (i.id, i.state, i.priority)).collect();
        assert_eq!(snap, vec![(f, InstanceState::Running, 9), (g, InstanceState::Suspended, 3)]);
        let out = s.complete(f).unwrap();
        assert_eq!(out.dispatched, vec![Dispatch { instance: g, task: id("1.1"), resumed: true }]);
    }

    #[test]
    fn equal_priority_queues() {
        let mut s = Scheduler::new(lib(), VirtualClock::default());
        let (a, _) = s.submit(&id("1.1")).unwrap();
        let (b, out) = s.submit(&id("1.3")).unwrap();
        assert!(out.dispatched.is_empty() && out.suspended.is_empty());
        assert_eq!(s.instance(b).unwrap().state, InstanceState::Pending);
        assert_eq!(s.instance(a).unwrap().state, InstanceState::Running);
    }

    #[test]
    fn highest_pending_starts_and_idle_after() {
        let mut s = Scheduler::new(lib(), VirtualClock::default());
        let (a, _) = s.submit(&id("1.2")).unwrap();
        s.submit(&id("1.5")).unwrap();
        let (c, _) = s.submit(&id("1.4")).unwrap();
        let out = s.complete(a).unwrap();
        assert_eq!(out.dispatched[0].instance, c);
        assert!(matches!(s.complete(a), Err(SchedError::Finished(_))));
        let mut idle = Scheduler::new(lib(), VirtualClock::default());
        assert!(idle.snapshot().is_empty());
        let (x, _) = idle.submit(&id("1.1")).unwrap();
        assert!(idle.complete(x).unwrap().dispatched.is_empty());
        assert!(idle.is_idle());
    }

    #[test]
    fn transitions_are_logged() {
        let clock = VirtualClock::default();
        let mut s = Scheduler::new(lib(), clock.clone());
        s.submit(&id("1.1")).unwrap();
        clock.advance_by(1000);
        s.submit(&id("1.2")).unwrap();
        let lines: Vec<String> = s.transitions().iter().map(ToString::to_string).collect();
        assert_eq!(lines[0], "00:00:00.000 SCHED #1:1.1 new→pending");
        assert!(lines.contains(&"00:00:01.000 SCHED #1:1.1 running→suspended".to_string()));
    }
}
