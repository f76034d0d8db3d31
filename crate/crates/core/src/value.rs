//! Context values and entity references.
//!
//! Every value has a single-token literal form used by the CSV dumps, the
//! JSON fixture files and the trace output:
//!
//! | variant     | literal                      |
//! |-------------|------------------------------|
//! | `Boolean`   | `true`, `false`              |
//! | `Time`      | `8:40`, `12:15`              |
//! | `Number`    | `20`, `-3.5`, `28 degC`      |
//! | `Entity`    | `Room:BathRoom_30`, `http://x/y#z` |
//! | `Text`      | `On`, or `"quoted"` when the bare form would read as another variant |

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("empty entity reference")]
    EmptyEntity,
    #[error("time of day out of range: {0}")]
    TimeOutOfRange(String),
    #[error("non-finite number")]
    NonFinite,
    #[error("malformed literal `{0}`")]
    Malformed(String),
}

/// Unique URI-like name of a real-world entity, e.g. `User:nihongbo`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct EntityRef(String);

impl EntityRef {
    pub fn new(uri: impl Into<String>) -> Result<Self, ValueError> {
        let uri = uri.into();
        if uri.trim().is_empty() || uri.chars().any(char::is_whitespace) {
            return Err(ValueError::EmptyEntity);
        }
        Ok(Self(uri))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The local part of the URI: whatever follows the last `#`, `/` or `:`.
    pub fn local_name(&self) -> &str {
        self.0.rsplit(['#', '/', ':']).find(|s| !s.is_empty()).unwrap_or(&self.0)
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for EntityRef {
    type Err = ValueError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl<'de> Deserialize<'de> for EntityRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        EntityRef::new(s).map_err(de::Error::custom)
    }
}

/// Minutes since midnight, `0..=1439`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeOfDay(u16);

impl TimeOfDay {
    pub const MAX: u16 = 1439;

    pub fn from_minutes(minutes: u16) -> Result<Self, ValueError> {
        if minutes > Self::MAX {
            return Err(ValueError::TimeOutOfRange(minutes.to_string()));
        }
        Ok(Self(minutes))
    }

    pub fn hm(hour: u16, minute: u16) -> Result<Self, ValueError> {
        if hour > 23 || minute > 59 {
            return Err(ValueError::TimeOutOfRange(format!("{hour}:{minute:02}")));
        }
        Ok(Self(hour * 60 + minute))
    }

    pub fn minutes(self) -> u16 {
        self.0
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{:02}", self.0 / 60, self.0 % 60)
    }
}

impl FromStr for TimeOfDay {
    type Err = ValueError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (h, m) = s.split_once(':').ok_or_else(|| ValueError::Malformed(s.to_string()))?;
        let digits = |p: &str, max_len| !p.is_empty() && p.len() <= max_len && p.bytes().all(|b| b.is_ascii_digit());
        if !digits(h, 2) || !digits(m, 2) || m.len() != 2 {
            return Err(ValueError::Malformed(s.to_string()));
        }
        let (h, m): (u16, u16) = (h.parse().unwrap(), m.parse().unwrap());
        TimeOfDay::hm(h, m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(String),
    Number { value: f64, unit: Option<String> },
    Boolean(bool),
    Time(TimeOfDay),
    Entity(EntityRef),
}

impl Value {
    pub fn number(value: f64) -> Self {
        Value::Number { value, unit: None }
    }

    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn entity(uri: &str) -> Self {
        Value::Entity(EntityRef::new(uri).expect("valid entity uri"))
    }

    pub fn time(hour: u16, minute: u16) -> Self {
        Value::Time(TimeOfDay::hm(hour, minute).expect("valid time of day"))
    }

    /// Numeric view used by distance computations and comparisons: numbers
    /// as-is, times of day as minutes since midnight.
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Number { value, .. } => Some(*value),
            Value::Time(t) => Some(f64::from(t.minutes())),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Text(_) => "text",
            Value::Number { .. } => "number",
            Value::Boolean(_) => "boolean",
            Value::Time(_) => "time",
            Value::Entity(_) => "entity",
        }
    }

    /// Parse a literal. Never fails: anything unrecognised is `Text`.
    pub fn parse_literal(s: &str) -> Result<Value, ValueError> {
        let s = s.trim();
        if s.starts_with('"') {
            return serde_json::from_str::<String>(s)
                .map(Value::Text)
                .map_err(|_| ValueError::Malformed(s.to_string()));
        }
        match s {
            "true" => return Ok(Value::Boolean(true)),
            "false" => return Ok(Value::Boolean(false)),
            _ => {}
        }
        if let Ok(t) = s.parse::<TimeOfDay>() {
            return Ok(Value::Time(t));
        }
        if looks_like_time(s) {
            return Err(ValueError::TimeOutOfRange(s.to_string()));
        }
        if let Some(v) = parse_number(s) {
            return v;
        }
        if is_entity_literal(s) {
            return Ok(Value::Entity(EntityRef(s.to_string())));
        }
        Ok(Value::Text(s.to_string()))
    }

    pub fn validate(&self) -> Result<(), ValueError> {
        match self {
            Value::Number { value, .. } if !value.is_finite() => Err(ValueError::NonFinite),
            _ => Ok(()),
        }
    }
}

fn looks_like_time(s: &str) -> bool {
    match s.split_once(':') {
        Some((h, m)) => {
            !h.is_empty()
                && !m.is_empty()
                && h.bytes().all(|b| b.is_ascii_digit())
                && m.bytes().all(|b| b.is_ascii_digit())
        }
        None => false,
    }
}

fn parse_number(s: &str) -> Option<Result<Value, ValueError>> {
    let (num, unit) = match s.split_once(' ') {
        Some((n, u)) if !u.is_empty() && u.chars().all(|c| c.is_alphabetic() || c == '%') => (n, Some(u.to_string())),
        Some(_) => return None,
        None => (s, None),
    };
    // reject things like "inf", "NaN", "1e400" that f64 parsing accepts
    if !num.bytes().all(|b| b.is_ascii_digit() || matches!(b, b'-' | b'+' | b'.' | b'e' | b'E'))
        || !num.bytes().any(|b| b.is_ascii_digit())
    {
        return None;
    }
    let value: f64 = num.parse().ok()?;
    if !value.is_finite() {
        return Some(Err(ValueError::NonFinite));
    }
    Some(Ok(Value::Number { value, unit }))
}

fn is_entity_literal(s: &str) -> bool {
    let Some((prefix, rest)) = s.split_once(':') else {
        return false;
    };
    !rest.is_empty()
        && prefix.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && prefix.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '+' | '.'))
        && !s.chars().any(char::is_whitespace)
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Boolean(b) => write!(f, "{b}"),
            Value::Time(t) => write!(f, "{t}"),
            Value::Number { value, unit: None } => write!(f, "{value}"),
            Value::Number { value, unit: Some(u) } => write!(f, "{value} {u}"),
            Value::Entity(e) => write!(f, "{e}"),
            Value::Text(s) => {
                let bare_ok = !s.is_empty()
                    && !s.contains(char::is_whitespace)
                    && !s.starts_with('"')
                    && !s.starts_with('[')
                    && Value::parse_literal(s).ok().as_ref() == Some(self);
                if bare_ok {
                    f.write_str(s)
                } else {
                    f.write_str(&serde_json::to_string(s).expect("string serialises"))
                }
            }
        }
    }
}

impl FromStr for Value {
    type Err = ValueError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Value::parse_literal(s)
    }
}

/// Total order over literals so that result sets sort deterministically.
pub fn literal_cmp(a: &Value, b: &Value) -> Ordering {
    a.to_string().cmp(&b.to_string())
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct LiteralVisitor;
        impl Visitor<'_> for LiteralVisitor {
            type Value = Value;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a value literal, number or boolean")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Value, E> {
                Value::parse_literal(v).map_err(E::custom)
            }
            fn visit_bool<E: de::Error>(self, v: bool) -> Result<Value, E> {
                Ok(Value::Boolean(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Value, E> {
                Ok(Value::number(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Value, E> {
                Ok(Value::number(v as f64))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Value, E> {
                if v.is_finite() {
                    Ok(Value::number(v))
                } else {
                    Err(E::custom(ValueError::NonFinite))
                }
            }
        }
        d.deserialize_any(LiteralVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn literal_forms() {
        assert_eq!(Value::parse_literal("8:40").unwrap(), Value::time(8, 40));
        assert_eq!(Value::parse_literal("true").unwrap(), Value::Boolean(true));
        assert_eq!(Value::parse_literal("20").unwrap(), Value::number(20.0));
        assert_eq!(Value::parse_literal("28 degC").unwrap(), Value::Number { value: 28.0, unit: Some("degC".into()) });
        assert_eq!(Value::parse_literal("Room:BathRoom_30").unwrap(), Value::entity("Room:BathRoom_30"));
        assert_eq!(Value::parse_literal("On").unwrap(), Value::text("On"));
        assert_eq!(Value::parse_literal("Lamp-2").unwrap(), Value::text("Lamp-2"));
    }

    #[test]
    fn time_bounds() {
        assert!(Value::parse_literal("24:00").is_err());
        assert!(Value::parse_literal("7:60").is_err());
        assert_eq!(TimeOfDay::from_minutes(1439).unwrap().to_string(), "23:59");
        assert!(TimeOfDay::from_minutes(1440).is_err());
    }

    #[test]
    fn ambiguous_text_is_quoted() {
        for s in ["true", "12:00", "42", "a:b", "two words", "", "[x]"] {
            let v = Value::text(s);
            let lit = v.to_string();
            assert!(lit.starts_with('"'), "{s} -> {lit}");
            assert_eq!(Value::parse_literal(&lit).unwrap(), v);
        }
    }

    #[test]
    fn local_name_strips_namespace() {
        assert_eq!(EntityRef::new("Room:BathRoom_30").unwrap().local_name(), "BathRoom_30");
        assert_eq!(EntityRef::new("http://example.org/space#DiningRoom").unwrap().local_name(), "DiningRoom");
        assert_eq!(EntityRef::new("NHB").unwrap().local_name(), "NHB");
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            "[ -~]{0,12}".prop_map(Value::Text),
            (-1e6f64..1e6).prop_map(Value::number),
            any::<bool>().prop_map(Value::Boolean),
            (0u16..=1439).prop_map(|m| Value::Time(TimeOfDay::from_minutes(m).unwrap())),
            "[A-Z][a-z]{1,6}:[A-Za-z0-9_]{1,8}".prop_map(|s| Value::Entity(EntityRef::new(s).unwrap())),
        ]
    }

    proptest! {
        #[test]
        fn literal_round_trip(v in arb_value()) {
            let lit = v.to_string();
            prop_assert_eq!(Value::parse_literal(&lit).unwrap(), v);
        }
    }
}
