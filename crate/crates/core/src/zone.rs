//! Location zones used to partition the case base and to prefer co-located
//! service providers.

use serde::{Deserialize, Serialize};

use crate::value::Value;

pub const DEFAULT_ZONES: [&str; 6] = ["Bedroom", "BathRoom", "Kitchen", "LivingRoom", "DiningRoom", "Hallway"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZoneMatch {
    pub zone: String,
    /// False when the zone is not one of the configured ones.
    pub known: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZoneMap {
    zones: Vec<String>,
}

impl Default for ZoneMap {
    fn default() -> Self {
        Self { zones: DEFAULT_ZONES.iter().map(|z| z.to_string()).collect() }
    }
}

impl ZoneMap {
    pub fn new(zones: Vec<String>) -> Self {
        Self { zones }
    }

    pub fn zones(&self) -> &[String] {
        &self.zones
    }

    /// Zone of a location value: the longest configured zone name that
    /// prefixes the value's local name (case-insensitively), otherwise the
    /// local name up to its first `_`. Numbers, times and booleans carry no
    /// zone.
    pub fn zone_of(&self, value: &Value) -> Option<ZoneMatch> {
        let name = match value {
            Value::Entity(e) => e.local_name().to_string(),
            Value::Text(t) if !t.trim().is_empty() => t.trim().to_string(),
            _ => return None,
        };
        let lower = name.to_ascii_lowercase();
        let best = self.zones.iter().filter(|z| lower.starts_with(&z.to_ascii_lowercase())).max_by_key(|z| z.len());
        match best {
            Some(z) => Some(ZoneMatch { zone: z.clone(), known: true }),
            None => {
                let stem = name.split('_').next().unwrap_or(&name).to_string();
                Some(ZoneMatch { zone: stem, known: false })
            }
        }
    }
}
