//! Step automaton executing one task contract.
//!
//! A run owns the rule sets of its contract as ordered steps and a cursor
//! `(step, rule)`. Each step follows its rule set's mode:
//!
//! * `sequence`: rules fire in order, each on its own event; a rule whose
//!   condition is false is skipped. After a rule the same event is offered
//!   to the next rule of the step. The step ends after its last rule.
//! * `choice`: the first rule whose event matches and whose condition holds
//!   fires and ends the step.
//! * `loop`: every matching rule fires on every event until the stop event.
//!
//! An optional per-step budget of virtual milliseconds bounds how long a
//! step may wait; the unspent part survives suspension.

use std::fmt;

use super::ast::{ActionSpec, Mode, RuleSet};
use super::condition::evaluate_condition;
use super::engine::EngineError;
use crate::clock::Stamp;
use crate::event::Event;
use crate::store::ContextReader;
use crate::task::{Procedure, TaskError, TaskId, TaskLibrary};

/// What a run needs from its surroundings.
pub trait Runtime {
    fn context(&self) -> &dyn ContextReader;
    fn dispatch(&mut self, action: &ActionSpec) -> Dispatched;
}

/// Result of handing an action to the runtime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dispatched {
    /// A provider was invoked, whatever it answered.
    pub reached: bool,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub stamp: Stamp,
    pub state: String,
    /// Zero-based step, when the entry concerns one.
    pub step: Option<usize>,
    pub rule: Option<usize>,
    pub event: String,
    pub action: String,
    /// Result of the rule condition; `None` when not evaluated or failed.
    pub condition: Option<bool>,
    /// An action was sent to a provider.
    pub dispatched: bool,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | {} | {} | {}", self.stamp, self.state, self.event, self.action)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecutionTrace {
    pub entries: Vec<TraceEntry>,
}

impl ExecutionTrace {
    pub fn lines(&self) -> Vec<String> {
        self.entries.iter().map(ToString::to_string).collect()
    }

    /// Entries for actions sent to a provider.
    pub fn dispatched(&self) -> impl Iterator<Item = &TraceEntry> {
        self.entries.iter().filter(|e| e.dispatched)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Created,
    Active,
    Suspended,
    Completed,
    Failed(String),
}

impl RunStatus {
    pub fn is_finished(&self) -> bool {
        matches!(self, RunStatus::Completed | RunStatus::Failed(_))
    }
}

/// Effect of offering an event to a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Ignored,
    Advanced,
    Completed,
}

/// Steps of a contract with composite contracts expanded into their
/// children's steps, plus the union of requirements in first-seen order.
pub fn flatten_contract(lib: &TaskLibrary, task: &TaskId) -> Result<(Vec<RuleSet>, Vec<String>), TaskError> {
    fn walk(
        lib: &TaskLibrary,
        task: &TaskId,
        steps: &mut Vec<RuleSet>,
        reqs: &mut Vec<String>,
    ) -> Result<(), TaskError> {
        let c = lib.resolve_contract(task)?;
        for r in &c.requirement {
            if !reqs.contains(r) {
                reqs.push(r.clone());
            }
        }
        match &c.procedure {
            Procedure::Steps(file) => steps.extend(file.sets.iter().cloned()),
            Procedure::Children(ids) => {
                for id in ids {
                    walk(lib, id, steps, reqs)?;
                }
            }
        }
        Ok(())
    }
    let (mut steps, mut reqs) = (Vec::new(), Vec::new());
    walk(lib, task, &mut steps, &mut reqs)?;
    Ok((steps, reqs))
}

#[derive(Debug, Clone)]
pub struct ProcedureRun {
    instance: u64,
    task: TaskId,
    steps: Vec<RuleSet>,
    step: usize,
    rule: usize,
    status: RunStatus,
    budget_ms: Option<u64>,
    deadline: Option<Stamp>,
    remaining_ms: Option<u64>,
    trace: ExecutionTrace,
}

impl ProcedureRun {
    pub fn new(instance: u64, task: TaskId, steps: Vec<RuleSet>, budget_ms: Option<u64>) -> Self {
        ProcedureRun {
            instance,
            task,
            steps,
            step: 0,
            rule: 0,
            status: RunStatus::Created,
            budget_ms,
            deadline: None,
            remaining_ms: None,
            trace: ExecutionTrace::default(),
        }
    }

    pub fn instance(&self) -> u64 {
        self.instance
    }

    pub fn task(&self) -> &TaskId {
        &self.task
    }

    pub fn steps(&self) -> &[RuleSet] {
        &self.steps
    }

    /// `(step, rule)`, zero-based.
    pub fn cursor(&self) -> (usize, usize) {
        (self.step, self.rule)
    }

    pub fn status(&self) -> &RunStatus {
        &self.status
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    pub fn deadline(&self) -> Option<Stamp> {
        self.deadline
    }

    fn state_label(&self, rule: Option<usize>) -> String {
        let n = self.steps.len();
        let step = (self.step + 1).min(n.max(1));
        let mut s = format!("#{}:{} S{step}/{n}", self.instance, self.task);
        if let Some(r) = rule {
            s.push_str(&format!(" R{}", r + 1));
        }
        s
    }

    fn note(&mut self, now: Stamp, event: &str, action: String) {
        let state = self.state_label(None);
        let step = (self.step < self.steps.len()).then_some(self.step);
        self.trace.entries.push(TraceEntry {
            stamp: now,
            state,
            step,
            rule: None,
            event: event.to_string(),
            action,
            condition: None,
            dispatched: false,
        });
    }

    fn arm(&mut self, now: Stamp) {
        self.deadline = self.budget_ms.map(|b| now.saturating_add(b));
    }

    pub fn start(&mut self, now: Stamp) -> Progress {
        debug_assert_eq!(self.status, RunStatus::Created);
        self.status = RunStatus::Active;
        self.note(now, "-", "started".into());
        self.arm(now);
        self.settle(now)
    }

    /// Skips over steps that cannot wait for anything.
    fn settle(&mut self, now: Stamp) -> Progress {
        while self.step < self.steps.len() {
            let s = &self.steps[self.step];
            if s.rules.is_empty() && s.stop_event.is_none() {
                self.step += 1;
                self.rule = 0;
                self.arm(now);
            } else {
                return Progress::Advanced;
            }
        }
        self.finish(now)
    }

    fn finish(&mut self, now: Stamp) -> Progress {
        self.status = RunStatus::Completed;
        self.deadline = None;
        self.note(now, "-", "completed".into());
        Progress::Completed
    }

    fn next_step(&mut self, now: Stamp) -> Progress {
        self.step += 1;
        self.rule = 0;
        self.arm(now);
        self.settle(now)
    }

    /// Evaluates rule `idx` of the current step against `event` and fires
    /// its actions when the condition holds. Returns whether it held.
    fn fire(&mut self, idx: usize, event: &Event, now: Stamp, rt: &mut dyn Runtime) -> bool {
        let rule = self.steps[self.step].rules[idx].clone();
        let state = self.state_label(Some(idx));
        let base = TraceEntry {
            stamp: now,
            state,
            step: Some(self.step),
            rule: Some(idx),
            event: event.to_string(),
            action: String::new(),
            condition: None,
            dispatched: false,
        };
        match evaluate_condition(rule.condition.as_ref(), event, rt.context()) {
            Err(e) => {
                self.trace.entries.push(TraceEntry { action: format!("skip (condition error: {e})"), ..base });
                false
            }
            Ok(false) => {
                self.trace.entries.push(TraceEntry {
                    action: "skip (condition false)".into(),
                    condition: Some(false),
                    ..base
                });
                false
            }
            Ok(true) => {
                for a in &rule.actions {
                    let d = rt.dispatch(a);
                    self.trace.entries.push(TraceEntry {
                        action: format!("{a} -> {}", d.outcome),
                        condition: Some(true),
                        dispatched: d.reached,
                        ..base.clone()
                    });
                }
                true
            }
        }
    }

    /// Offers an event addressed to `step`. Only the current step of an
    /// active run reacts.
    pub fn offer(&mut self, step: usize, event: &Event, now: Stamp, rt: &mut dyn Runtime) -> Progress {
        if self.status != RunStatus::Active || step != self.step || self.step >= self.steps.len() {
            return Progress::Ignored;
        }
        let set = &self.steps[self.step];
        match set.mode {
            Mode::Sequence => {
                let mut moved = false;
                while self.rule < self.steps[self.step].rules.len()
                    && self.steps[self.step].rules[self.rule].event.name == event.name
                {
                    self.fire(self.rule, event, now, rt);
                    self.rule += 1;
                    moved = true;
                }
                if !moved {
                    return Progress::Ignored;
                }
                if self.rule >= self.steps[self.step].rules.len() {
                    return self.next_step(now);
                }
                Progress::Advanced
            }
            Mode::Choice => {
                let candidates: Vec<usize> =
                    set.rules.iter().enumerate().filter(|(_, r)| r.event.name == event.name).map(|(i, _)| i).collect();
                for i in candidates {
                    let cond = self.steps[self.step].rules[i].condition.clone();
                    if evaluate_condition(cond.as_ref(), event, rt.context()) == Ok(true) {
                        self.rule = i;
                        self.fire(i, event, now, rt);
                        return self.next_step(now);
                    }
                }
                Progress::Ignored
            }
            Mode::Loop => {
                if set.stop_event.as_ref().is_some_and(|s| s.name == event.name) {
                    self.note(now, &event.to_string(), "loop stopped".into());
                    return self.next_step(now);
                }
                let matching: Vec<usize> =
                    set.rules.iter().enumerate().filter(|(_, r)| r.event.name == event.name).map(|(i, _)| i).collect();
                if matching.is_empty() {
                    return Progress::Ignored;
                }
                for i in matching {
                    self.rule = i;
                    self.fire(i, event, now, rt);
                }
                Progress::Advanced
            }
        }
    }

    /// Pauses the run, keeping the unspent step budget.
    pub fn suspend(&mut self, now: Stamp) {
        if self.status != RunStatus::Active {
            return;
        }
        self.remaining_ms = self.deadline.map(|d| d.millis().saturating_sub(now.millis()));
        self.deadline = None;
        self.status = RunStatus::Suspended;
        self.note(now, "-", "suspended".into());
    }

    pub fn resume(&mut self, now: Stamp) {
        if self.status != RunStatus::Suspended {
            return;
        }
        self.deadline = self.remaining_ms.take().map(|r| now.saturating_add(r));
        self.status = RunStatus::Active;
        self.note(now, "-", "resumed".into());
    }

    /// Fails the run when the current step's budget ran out by `now`.
    pub fn check_deadline(&mut self, now: Stamp) -> Option<EngineError> {
        let deadline = self.deadline?;
        if self.status != RunStatus::Active || now < deadline {
            return None;
        }
        let err = EngineError::StepTimeout { step: self.step + 1, budget_ms: self.budget_ms.unwrap_or(0) };
        self.fail(deadline, &err.to_string());
        Some(err)
    }

    pub fn fail(&mut self, now: Stamp, reason: &str) {
        if self.status.is_finished() {
            return;
        }
        self.status = RunStatus::Failed(reason.to_string());
        self.deadline = None;
        self.note(now, "-", format!("failed: {reason}"));
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::eca::parse_rules;
    use crate::event::EventKind;
    use crate::value::Value;

    struct Fake {
        ctx: HashMap<(String, String), Value>,
        calls: Vec<String>,
    }

    impl Runtime for Fake {
        fn context(&self) -> &dyn ContextReader {
            &self.ctx
        }
        fn dispatch(&mut self, action: &ActionSpec) -> Dispatched {
            self.calls.push(format!("{}:{}", action.service, action.method));
            Dispatched { reached: true, outcome: "ok".into() }
        }
    }

    fn fake(temp: f64) -> Fake {
        let mut ctx = HashMap::new();
        ctx.insert(("T".to_string(), "v".to_string()), Value::number(temp));
        Fake { ctx, calls: Vec::new() }
    }

    fn ev(name: &str) -> Event {
        Event::new(EventKind::Context, name, Stamp(0))
    }

    const SRC: &str = "
        rules for <A> { When p.t THEN DO <P>.Msg:Send(); }
        rules for <B> { When g.u THEN DO <P>.Light:On(); When g.u If T.v < 20 THEN DO <P>.Ac:Start(); }
    ";

    #[test]
    fn sequence_runs_steps_in_order() {
        let mut run = ProcedureRun::new(1, TaskId::parse("1.1").unwrap(), parse_rules(SRC).unwrap(), None);
        let mut rt = fake(18.0);
        assert_eq!(run.start(Stamp(0)), Progress::Advanced);
        assert_eq!(run.offer(1, &ev("g.u"), Stamp(1), &mut rt), Progress::Ignored);
        assert_eq!(run.offer(0, &ev("p.t"), Stamp(2), &mut rt), Progress::Advanced);
        assert_eq!(run.cursor(), (1, 0));
        assert_eq!(run.offer(1, &ev("g.u"), Stamp(3), &mut rt), Progress::Completed);
        assert_eq!(rt.calls, vec!["Msg:Send", "Light:On", "Ac:Start"]);
        let steps: Vec<usize> = run.trace().dispatched().map(|e| e.step.unwrap()).collect();
        assert_eq!(steps, vec![0, 1, 1]);
    }

    #[test]
    fn false_condition_is_skipped() {
        let mut run = ProcedureRun::new(1, TaskId::parse("1.1").unwrap(), parse_rules(SRC).unwrap(), None);
        let mut rt = fake(25.0);
        run.start(Stamp(0));
        run.offer(0, &ev("p.t"), Stamp(0), &mut rt);
        assert_eq!(run.offer(1, &ev("g.u"), Stamp(0), &mut rt), Progress::Completed);
        assert_eq!(rt.calls, vec!["Msg:Send", "Light:On"]);
        assert!(run.trace().lines().iter().any(|l| l.contains("skip (condition false)")));
    }

    #[test]
    fn choice_and_loop_modes() {
        let src = "rules for <A> choice { When e If T.v > 30 THEN DO <P>.S:hot(); When e THEN DO <P>.S:mild(); }
                   rules for <A> loop until stop { When tick THEN DO <P>.S:beat(); }";
        let mut run = ProcedureRun::new(2, TaskId::parse("1.2").unwrap(), parse_rules(src).unwrap(), None);
        let mut rt = fake(20.0);
        run.start(Stamp(0));
        run.offer(0, &ev("e"), Stamp(0), &mut rt);
        for _ in 0..3 {
            assert_eq!(run.offer(1, &ev("tick"), Stamp(0), &mut rt), Progress::Advanced);
        }
        assert_eq!(run.offer(1, &ev("stop"), Stamp(0), &mut rt), Progress::Completed);
        assert_eq!(rt.calls, vec!["S:mild", "S:beat", "S:beat", "S:beat"]);
    }

    #[test]
    fn budget_survives_suspension() {
        let mut run = ProcedureRun::new(3, TaskId::parse("1.1").unwrap(), parse_rules(SRC).unwrap(), Some(1000));
        run.start(Stamp(0));
        run.suspend(Stamp(400));
        assert!(run.check_deadline(Stamp(5000)).is_none());
        run.resume(Stamp(5000));
        assert_eq!(run.deadline(), Some(Stamp(5600)));
        assert!(run.check_deadline(Stamp(5599)).is_none());
        assert!(matches!(run.check_deadline(Stamp(5600)), Some(EngineError::StepTimeout { step: 1, budget_ms: 1000 })));
        assert!(matches!(run.status(), RunStatus::Failed(_)));
    }
}
