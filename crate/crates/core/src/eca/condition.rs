//! Condition evaluation against an event and the context store.

use thiserror::Error;

use super::ast::{CmpOp, Expr, Literal, Operand};
use crate::event::Event;
use crate::store::ContextReader;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("type error: {0}")]
    TypeError(String),
}

/// Evaluates `cond`; an absent condition holds. Variables resolve from the
/// event's variables first, then from the store by splitting the dotted name
/// at its last `.` into subject and predicate. `&&` and `||` short-circuit.
pub fn evaluate_condition(cond: Option<&Expr>, event: &Event, ctx: &dyn ContextReader) -> Result<bool, EvalError> {
    match cond {
        None => Ok(true),
        Some(e) => eval(e, event, ctx),
    }
}

fn eval(e: &Expr, event: &Event, ctx: &dyn ContextReader) -> Result<bool, EvalError> {
    match e {
        Expr::Or(a, b) => Ok(eval(a, event, ctx)? || eval(b, event, ctx)?),
        Expr::And(a, b) => Ok(eval(a, event, ctx)? && eval(b, event, ctx)?),
        Expr::Not(a) => Ok(!eval(a, event, ctx)?),
        Expr::Paren(a) => eval(a, event, ctx),
        Expr::Truth(o) => match resolve(o, event, ctx)? {
            Value::Boolean(b) => Ok(b),
            other => Err(EvalError::TypeError(format!("`{o}` is {}, not boolean", other.kind_name()))),
        },
        Expr::Cmp(a, op, b) => {
            let (va, vb) = (resolve(a, event, ctx)?, resolve(b, event, ctx)?);
            compare(&va, *op, &vb)
        }
    }
}

pub fn resolve(o: &Operand, event: &Event, ctx: &dyn ContextReader) -> Result<Value, EvalError> {
    match o {
        Operand::Lit(l) => Ok(literal_value(l)),
        Operand::Var(name) => {
            if let Some(v) = event.variables.get(name) {
                return Ok(v.clone());
            }
            name.rsplit_once('.')
                .and_then(|(subject, predicate)| ctx.lookup(subject, predicate))
                .ok_or_else(|| EvalError::UnboundVariable(name.clone()))
        }
    }
}

pub fn literal_value(l: &Literal) -> Value {
    match l {
        Literal::Number(n) => Value::number(*n),
        Literal::Str(s) | Literal::Ident(s) => Value::text(s.clone()),
        Literal::Bool(b) => Value::Boolean(*b),
        Literal::Time(t) => Value::Time(*t),
    }
}

fn compare(a: &Value, op: CmpOp, b: &Value) -> Result<bool, EvalError> {
    if let (Some(x), Some(y)) = (a.as_scalar(), b.as_scalar()) {
        return Ok(match op {
            CmpOp::Lt => x < y,
            CmpOp::Le => x <= y,
            CmpOp::Gt => x > y,
            CmpOp::Ge => x >= y,
            CmpOp::Eq => x == y,
            CmpOp::Ne => x != y,
        });
    }
    let eq = match (a, b) {
        (Value::Text(x), Value::Text(y)) => x == y,
        (Value::Boolean(x), Value::Boolean(y)) => x == y,
        (Value::Entity(x), Value::Entity(y)) => x == y,
        (Value::Entity(e), Value::Text(t)) | (Value::Text(t), Value::Entity(e)) => {
            e.as_str() == t || e.local_name() == t
        }
        _ => {
            return Err(EvalError::TypeError(format!(
                "cannot compare {} with {} using `{}`",
                a.kind_name(),
                b.kind_name(),
                op.symbol()
            )))
        }
    };
    match op {
        CmpOp::Eq => Ok(eq),
        CmpOp::Ne => Ok(!eq),
        _ => Err(EvalError::TypeError(format!(
            "`{}` needs numbers or times, got {} and {}",
            op.symbol(),
            a.kind_name(),
            b.kind_name()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::clock::Stamp;
    use crate::eca::parser::parse_condition;
    use crate::event::EventKind;

    fn ctx(pairs: &[(&str, &str, Value)]) -> HashMap<(String, String), Value> {
        pairs.iter().map(|(s, p, v)| ((s.to_string(), p.to_string()), v.clone())).collect()
    }

    fn ev() -> Event {
        Event::new(EventKind::Internal, "E", Stamp::ZERO)
    }

    #[test]
    fn cold_and_humid() {
        let c = parse_condition("Temperature_bedroom.CurrentValue<20 && humidity_bedroom.CurrentValue>60").unwrap();
        let store = ctx(&[
            ("Temperature_bedroom", "CurrentValue", Value::number(18.0)),
            ("humidity_bedroom", "CurrentValue", Value::number(70.0)),
        ]);
        assert!(evaluate_condition(Some(&c), &ev(), &store).unwrap());
    }

    #[test]
    fn or_short_circuits_past_unbound() {
        let c = parse_condition("T.v > 30 || H.v > 80").unwrap();
        let store = ctx(&[("T", "v", Value::number(30.5))]);
        assert!(evaluate_condition(Some(&c), &ev(), &store).unwrap());
        let store = ctx(&[("T", "v", Value::number(20.0))]);
        assert_eq!(evaluate_condition(Some(&c), &ev(), &store), Err(EvalError::UnboundVariable("H.v".into())));
    }

    #[test]
    fn absent_condition_holds() {
        assert!(evaluate_condition(None, &ev(), &ctx(&[])).unwrap());
    }

    #[test]
    fn event_variables_shadow_store() {
        let c = parse_condition("T.v == 1").unwrap();
        let store = ctx(&[("T", "v", Value::number(2.0))]);
        let e = ev().with_var("T.v", Value::number(1.0));
        assert!(evaluate_condition(Some(&c), &e, &store).unwrap());
    }

    #[test]
    fn times_compare_and_text_equality() {
        let store = ctx(&[
            ("U", "Time", Value::time(12, 15)),
            ("D", "state", Value::text("Open")),
            ("L", "on", Value::Boolean(true)),
        ]);
        let c = parse_condition("U.Time >= 12:00 && U.Time <= 13:30 && D.state != \"Closed\" && L.on").unwrap();
        assert!(evaluate_condition(Some(&c), &ev(), &store).unwrap());
        let bad = parse_condition("D.state < 3").unwrap();
        assert!(matches!(evaluate_condition(Some(&bad), &ev(), &store), Err(EvalError::TypeError(_))));
    }
}
