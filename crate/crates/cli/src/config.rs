//! Configuration files merged underneath explicit command-line flags.

use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

const SECTIONS: &[&str] = &[
    "cce", "bathgen", "eseem", "fit", "stark", "id", "reflect", "gens", "t1sim", "t1temp", "anisotropy",
];

/// Reads a TOML file, or a JSON report emitted by an earlier run.
pub fn load(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let value: Value = if is_json {
        serde_json::from_str(&text).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?
    };
    if !value.is_object() {
        return Err(CliError::user(format!("{}: expected a table of settings", path.display())));
    }
    Ok(value)
}

/// The settings that apply to `command`: an emitted report's `config`, a
/// `[command]` section, or the whole file when it has no sections.
fn section<'a>(file: &'a Value, command: &str) -> Result<Option<&'a Map<String, Value>>, CliError> {
    let obj = file.as_object().expect("checked on load");
    if let (Some(Value::String(c)), Some(cfg)) = (obj.get("command"), obj.get("config")) {
        if c != command {
            return Err(CliError::user(format!("config was emitted by `{c}`, not `{command}`")));
        }
        return Ok(cfg.as_object());
    }
    if obj.keys().any(|k| SECTIONS.contains(&k.as_str())) {
        return match obj.get(command) {
            None => Ok(None),
            Some(Value::Object(m)) => Ok(Some(m)),
            Some(_) => Err(CliError::user(format!("config section `{command}` must be a table"))),
        };
    }
    Ok(Some(obj))
}

/// Overlays file settings on `parsed` wherever the flag was not given explicitly.
pub fn resolve<T: Serialize + DeserializeOwned>(
    parsed: T,
    matches: &ArgMatches,
    file: Option<&Value>,
    command: &str,
) -> Result<T, CliError> {
    let Some(table) = file.map(|f| section(f, command)).transpose()?.flatten() else {
        return Ok(parsed);
    };
    let mut current = match serde_json::to_value(&parsed)? {
        Value::Object(m) => m,
        _ => unreachable!("argument structs serialise as objects"),
    };
    for (key, value) in table {
        if !current.contains_key(key) {
            return Err(CliError::user(format!("config: unknown field `{key}` for `{command}`")));
        }
        let explicit = matches.ids().any(|id| id.as_str() == key)
            && matches.value_source(key) == Some(ValueSource::CommandLine);
        if explicit {
            continue;
        }
        current.insert(key.clone(), value.clone());
        serde_json::from_value::<T>(Value::Object(current.clone()))
            .map_err(|e| CliError::user(format!("config field `{key}`: {e}")))?;
    }
    Ok(serde_json::from_value(Value::Object(current))?)
}
