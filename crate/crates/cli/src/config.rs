//! Flat `key=value` config files and snapshots.
//!
//! Keys are long flag names without the leading dashes. Booleans take
//! `true`/`false`. Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Command-line arguments equivalent to the config pairs. `known` holds the
/// long flag names of the subcommand and `flags` the boolean ones.
pub fn to_args(
    pairs: &[(String, String)],
    known: &BTreeSet<String>,
    flags: &BTreeSet<String>,
) -> Result<Vec<String>, String> {
    let mut args = Vec::new();
    for (k, v) in pairs {
        if k == "command" || k == "config" {
            continue;
        }
        if !known.contains(k) {
            return Err(format!("unknown key {k:?}"));
        }
        if flags.contains(k) {
            match v.as_str() {
                "true" => args.push(format!("--{k}")),
                "false" => {}
                _ => return Err(format!("{k} expects true or false, got {v:?}")),
            }
        } else {
            args.push(format!("--{k}"));
            args.push(v.clone());
        }
    }
    Ok(args)
}

/// Snapshot of resolved arguments in config-file form.
pub fn snapshot<T: Serialize>(command: &str, args: &T) -> String {
    let mut s = format!("command={command}\n");
    if let Ok(Value::Object(map)) = serde_json::to_value(args) {
        for (k, v) in map {
            match v {
                Value::Null => {}
                Value::String(x) => s.push_str(&format!("{k}={x}\n")),
                other => s.push_str(&format!("{k}={other}\n")),
            }
        }
    }
    s
}

pub fn write_snapshot<T: Serialize>(dir: &Path, command: &str, args: &T) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(format!("{command}.snapshot"));
    std::fs::write(&path, snapshot(command, args)).map_err(|e| CliError::io(&path, e))
}
