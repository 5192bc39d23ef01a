//! Layered configuration: built-in defaults, then a JSON file, then flags.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Global {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub sequential: Option<bool>,
}

const GLOBAL_KEYS: [&str; 3] = ["out", "threads", "sequential"];

fn strip_nulls(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

fn to_map<T: Serialize>(t: &T) -> Result<Map<String, Value>, CliError> {
    Ok(strip_nulls(serde_json::to_value(t).map_err(|e| CliError::Config(e.to_string()))?))
}

pub fn read_file(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::Config("config file must hold a JSON object".into())),
        Err(e) => Err(CliError::Config(format!("config {}: {e}", path.display()))),
    }
}

/// `defaults ⊕ file ⊕ flags`, validated against `T`.
pub fn resolve<T>(defaults: &T, file: &Map<String, Value>, flags: &T) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned,
{
    let mut merged = to_map(defaults)?;
    for (k, v) in file {
        if !GLOBAL_KEYS.contains(&k.as_str()) {
            merged.insert(k.clone(), v.clone());
        }
    }
    merged.extend(to_map(flags)?);
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(e.to_string()))
}

pub fn resolve_global(file: &Map<String, Value>, flags: &Global) -> Result<Global, CliError> {
    let mut merged = Map::new();
    for k in GLOBAL_KEYS {
        if let Some(v) = file.get(k) {
            merged.insert(k.to_string(), v.clone());
        }
    }
    merged.extend(to_map(flags)?);
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(rename_all = "kebab-case", deny_unknown_fields)]
    struct Opts {
        beta: Option<f64>,
        seed: Option<u64>,
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let defaults = Opts { beta: Some(1.0), seed: Some(1) };
        let file = strip_nulls(serde_json::json!({"beta": 2.0, "seed": 5, "out": "x"}));
        let flags = Opts { beta: None, seed: Some(9) };
        assert_eq!(resolve(&defaults, &file, &flags).unwrap(), Opts { beta: Some(2.0), seed: Some(9) });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let file = strip_nulls(serde_json::json!({"bogus": 1}));
        assert!(matches!(resolve(&Opts::default(), &file, &Opts::default()), Err(CliError::Config(_))));
    }
}
