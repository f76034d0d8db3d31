//! Syntax tree of the rule language.
//!
//! Besides the semantic content the tree records the optional surface forms
//! (braces around a rule body, `()` after an event, trailing `;`, angle
//! brackets around targets, the `Begin { .. } End` wrapper) so that printing
//! a parsed file gives back the same token sequence.

use std::fmt;

use crate::value::TimeOfDay;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Sequence,
    Choice,
    Loop,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sequence => "sequence",
            Mode::Choice => "choice",
            Mode::Loop => "loop",
        })
    }
}

/// A parsed rule file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleFile {
    /// Wrapped in `Begin { ... } End`.
    pub wrapped: bool,
    pub sets: Vec<RuleSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub name: String,
    /// Trailing `*`: matches every entity whose name starts with `name`.
    pub template: bool,
    pub angled: bool,
}

impl Target {
    pub fn matches(&self, entity: &str) -> bool {
        if self.template {
            entity.starts_with(&self.name)
        } else {
            entity == self.name
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRef {
    /// Dotted name, e.g. `Bed_pressure_Sensor.triggered`.
    pub name: String,
    pub call_parens: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub targets: Vec<Target>,
    pub mode: Mode,
    /// `mode` was written out rather than defaulted.
    pub mode_explicit: bool,
    /// Required for `loop` mode.
    pub stop_event: Option<EventRef>,
    pub rules: Vec<Rule>,
}

impl RuleSet {
    /// Distinct event names in first-appearance order, stop event last.
    pub fn event_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let names = self.rules.iter().map(|r| &r.event.name).chain(self.stop_event.as_ref().map(|e| &e.name));
        for n in names {
            if !out.contains(n) {
                out.push(n.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub event: EventRef,
    pub condition: Option<Expr>,
    pub actions: Vec<ActionSpec>,
    /// Body written as `{ [If ..] Then DO .. }`.
    pub braced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(f64),
    Str(String),
    Bool(bool),
    Time(TimeOfDay),
    Ident(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(n) => write!(f, "{n}"),
            Literal::Str(s) => f.write_str(&serde_json::to_string(s).expect("string serialises")),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Time(t) => write!(f, "{t}"),
            Literal::Ident(i) => f.write_str(i),
        }
    }
}

/// `<Provider>.Service:Method(args)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub provider: String,
    pub service: String,
    pub method: String,
    pub args: Vec<Literal>,
    pub terminated: bool,
}

impl fmt::Display for ActionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(Literal::to_string).collect();
        write!(f, "<{}>.{}:{}({})", self.provider, self.service, self.method, args.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    /// Dotted variable reference.
    Var(String),
    Lit(Literal),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => f.write_str(v),
            Operand::Lit(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Or(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Paren(Box<Expr>),
    Cmp(Operand, CmpOp, Operand),
    /// A bare operand used as a truth value.
    Truth(Operand),
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Or(a, b) => write!(f, "{a} || {b}"),
            Expr::And(a, b) => write!(f, "{a} && {b}"),
            Expr::Not(e) => write!(f, "!{e}"),
            Expr::Paren(e) => write!(f, "({e})"),
            Expr::Cmp(a, op, b) => write!(f, "{a} {} {b}", op.symbol()),
            Expr::Truth(o) => write!(f, "{o}"),
        }
    }
}
