use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{excerpt, ModelError, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubEntry {
    pub input: Value,
    pub output: Value,
}

/// Lookup table for a deterministic stub endpoint.
///
/// ```json
/// {"role":"mt","delay_ms":5.0,"entries":[{"input":"hello","output":"你好"}]}
/// ```
///
/// `input` is the request text for `mt`/`t2s` and the token triples for
/// `s2t`/`s2s`. With `echo` set the input is returned unchanged; `fallback`
/// answers any input without an entry.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StubMap {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default)]
    pub delay_ms: f64,
    #[serde(default)]
    pub echo: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<Value>,
    #[serde(default)]
    pub entries: Vec<StubEntry>,
}

impl StubMap {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))
    }

    pub fn with_delay(mut self, delay_ms: f64) -> Self {
        self.delay_ms = delay_ms;
        self
    }

    pub fn insert(&mut self, input: impl Into<Value>, output: impl Into<Value>) {
        self.entries.push(StubEntry { input: input.into(), output: output.into() });
    }

    pub fn echo() -> Self {
        Self { echo: true, ..Self::default() }
    }
}

pub(super) struct StubBackend {
    table: HashMap<String, Value>,
    map: StubMap,
}

impl StubBackend {
    pub(super) fn new(map: StubMap) -> Self {
        let table = map.entries.iter().map(|e| (e.input.to_string(), e.output.clone())).collect();
        Self { table, map }
    }

    pub(super) fn call(&self, key: &Value, timeout: Duration) -> Result<Value, ModelError> {
        if self.map.delay_ms > 0.0 {
            let delay = Duration::from_secs_f64(self.map.delay_ms / 1000.0);
            if delay > timeout {
                thread::sleep(timeout);
                return Err(ModelError::Timeout);
            }
            thread::sleep(delay);
        }
        if self.map.echo {
            return Ok(key.clone());
        }
        let raw = key.to_string();
        self.table
            .get(&raw)
            .or(self.map.fallback.as_ref())
            .cloned()
            .ok_or_else(|| ModelError::NoMapping(excerpt(&raw)))
    }
}
