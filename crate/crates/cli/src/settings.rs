//! Layered configuration: defaults < `--config` file < `PLCRCA_*` environment < flags.
//!
//! Environment keys map onto the config tree by lower-casing and splitting on `__`,
//! so `PLCRCA_IAE__EWC_LAMBDA=0.2` sets `iae.ewc_lambda`. Values are read as JSON
//! when they parse as JSON and as plain strings otherwise.

use std::path::Path;

use plcrca_core::config::RunConfig;
use serde_json::{Map, Value};

use crate::error::CliError;

pub const ENV_PREFIX: &str = "PLCRCA_";

/// Recursively overlays `patch` onto `base`; non-object values replace.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Builds the patch described by `PLCRCA_*` variables.
pub fn env_patch<I>(vars: I) -> Result<Value, CliError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut root = Value::Object(Map::new());
    // sorted so a variable set at two depths resolves the same way every time
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
        if path.iter().any(String::is_empty) {
            return Err(CliError::Usage(format!("malformed environment override `{key}`")));
        }
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let mut patch = value;
        for seg in path.iter().rev() {
            let mut m = Map::new();
            m.insert(seg.clone(), patch);
            patch = Value::Object(m);
        }
        merge(&mut root, patch);
    }
    Ok(root)
}

/// Defaults, then the file, then the environment. Flags are applied by the caller
/// on the typed result.
pub fn load<I>(file: Option<&Path>, env: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut tree = serde_json::to_value(RunConfig::default()).map_err(|e| CliError::Internal(e.to_string()))?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let patch: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        if !patch.is_object() {
            return Err(CliError::Usage(format!("config {} must hold a JSON object", path.display())));
        }
        merge(&mut tree, patch);
    }
    merge(&mut tree, env_patch(env)?);
    serde_json::from_value(tree).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
}
