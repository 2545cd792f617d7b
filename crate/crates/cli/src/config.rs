use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Error caused by the invocation itself; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Fails with a usage error naming `flag` unless `ok`.
pub fn check_flag(ok: bool, flag: &str, requirement: &str) -> anyhow::Result<()> {
    if ok {
        Ok(())
    } else {
        Err(usage(format!("{flag} {requirement}")))
    }
}

/// Reads the section of a config file that applies to `command`.
///
/// A top-level object keyed by the command name is used when present;
/// otherwise the whole object applies.
pub fn load_section(path: &Path, command: &str) -> anyhow::Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(mut top) = value else {
        return Err(usage(format!("config {} must be a JSON object", path.display())));
    };
    match top.remove(command) {
        Some(Value::Object(section)) => Ok(section),
        Some(_) => Err(usage(format!("config section `{command}` must be an object"))),
        None => Ok(top),
    }
}

/// Layers flags over the config section and fills the rest from defaults.
pub fn resolve<A: Serialize, R: DeserializeOwned>(
    flags: &A,
    config: Option<Map<String, Value>>,
) -> anyhow::Result<R> {
    let mut merged = config.unwrap_or_default();
    if let Value::Object(flags) = serde_json::to_value(flags)? {
        for (k, v) in flags {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("invalid configuration: {e}")))
}
