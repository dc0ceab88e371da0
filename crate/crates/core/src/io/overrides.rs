//! Dotted-key parameter overrides, e.g. `cbf.eps_x = 0.3`.
//!
//! Any field of [`ScenarioConfig`] can be addressed; list elements use their
//! index (`hdvs.0.script.v0 = 25.0`). Values are type-checked against the
//! field they replace.

use std::path::Path;

use serde_json::Value;

use super::IoError;
use crate::sim::ScenarioConfig;

/// Flatten a TOML document into `(dotted key, value)` pairs. Tables are
/// descended into, arrays are leaves.
pub fn parse_overrides(text: &str) -> Result<Vec<(String, Value)>, IoError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| IoError::Config(e.to_string()))?;
    let mut out = Vec::new();
    flatten("", &toml::Value::Table(table), &mut out)?;
    Ok(out)
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, Value)>) -> Result<(), IoError> {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out)?;
            }
        }
        leaf => {
            let json = serde_json::to_value(leaf).map_err(|e| IoError::Config(e.to_string()))?;
            out.push((prefix.to_string(), json));
        }
    }
    Ok(())
}

fn slot<'a>(root: &'a mut Value, key: &str) -> Result<&'a mut Value, IoError> {
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(move |i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| IoError::Config(format!("unknown parameter `{key}`")))?;
    }
    Ok(node)
}

/// Replace one parameter. Optional fields that are currently unset
/// (`null`) accept any value the field type accepts.
pub fn apply_override(config: &ScenarioConfig, key: &str, value: Value) -> Result<ScenarioConfig, IoError> {
    let mut tree = serde_json::to_value(config).map_err(|e| IoError::Config(e.to_string()))?;
    *slot(&mut tree, key)? = value;
    let updated: ScenarioConfig = serde_json::from_value(tree)
        .map_err(|e| IoError::Config(format!("bad value for `{key}`: {e}")))?;
    updated
        .validate()
        .map_err(|e| IoError::Config(format!("after `{key}`: {e}")))?;
    Ok(updated)
}

pub fn apply_overrides(config: &ScenarioConfig, text: &str) -> Result<ScenarioConfig, IoError> {
    parse_overrides(text)?
        .into_iter()
        .try_fold(config.clone(), |c, (k, v)| apply_override(&c, &k, v))
}

/// Apply the overrides in the file at `path`.
pub fn load_config(config: &ScenarioConfig, path: &Path) -> Result<ScenarioConfig, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    apply_overrides(config, &text)
}
