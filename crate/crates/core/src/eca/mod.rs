//! Event-condition-action rule language and execution.

pub mod ast;
pub mod condition;
pub mod engine;
pub mod lexer;
pub mod parser;
mod print;
pub mod procedure;

use std::fmt;

pub use ast::{ActionSpec, EventRef, Expr, Mode, Rule, RuleFile, RuleSet, Target};
pub use condition::{evaluate_condition, EvalError};
pub use engine::{Engine, EngineError, Inbound, Owner};
pub use parser::{parse_condition, parse_file, parse_rules};
pub use procedure::{
    flatten_contract, Dispatched, ExecutionTrace, ProcedureRun, Progress, RunStatus, Runtime, TraceEntry,
};

/// Parse failure with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl SyntaxError {
    pub fn new(line: usize, column: usize, expected: Vec<&str>, found: &str) -> Self {
        Self { line, column, expected: expected.into_iter().map(str::to_string).collect(), found: found.to_string() }
    }
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at line {}, column {}: expected ", self.line, self.column)?;
        match self.expected.as_slice() {
            [one] => f.write_str(one)?,
            many => write!(f, "one of {}", many.join(", "))?,
        }
        write!(f, ", found {}", self.found)
    }
}

impl std::error::Error for SyntaxError {}
