//! `--config` files: a JSON object keyed by long flag names. Entries are
//! appended to argv for flags the command line does not already set, which
//! gives flags > config file > defaults. `SPA_JOBS` counts as a flag.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgMatches, CommandFactory};
use serde_json::Value;
use spa_core::SpaError;

use crate::args::Cli;
use crate::Failure;

/// Flags never taken from or echoed to a config file.
const NOT_CONFIGURABLE: &[&str] = &["config", "help", "version"];

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn given_flags(args: &[OsString]) -> BTreeSet<String> {
    args.iter()
        .filter_map(|a| a.to_str()?.strip_prefix("--").map(str::to_owned))
        .map(|f| f.split('=').next().unwrap_or_default().to_owned())
        .collect()
}

fn render(key: &str, v: &Value) -> Result<Option<String>, Failure> {
    Ok(match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Array(items) => {
            let parts = items
                .iter()
                .map(|i| match render(key, i)? {
                    Some(s) => Ok(s),
                    None => Err(Failure::Usage(format!("config key {key:?}: null list entry"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(parts.join(","))
        }
        Value::Object(_) => {
            return Err(Failure::Usage(format!("config key {key:?}: nested objects are not flags")))
        }
    })
}

/// Returns `argv` with config entries appended.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let Some(sub_name) = argv.get(1).and_then(|s| s.to_str()).map(str::to_owned) else {
        return Ok(argv);
    };
    let cli = Cli::command();
    let Some(sub) = cli.find_subcommand(&sub_name) else {
        return Ok(argv);
    };
    let Some(path) = config_path(&argv[2..]) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|source| {
        Failure::Data(SpaError::Io {
            path: path.clone(),
            source,
        })
    })?;
    let mut root: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
    // a run manifest nests the echoed flags under "config"
    if let Some(inner) = root.get_mut("config").filter(|v| v.is_object()) {
        root = inner.take();
    }
    let Value::Object(entries) = root else {
        return Err(Failure::Usage(format!(
            "config {}: expected a JSON object",
            path.display()
        )));
    };

    let given = given_flags(&argv[2..]);
    let jobs_from_env = std::env::var_os("SPA_JOBS").is_some();
    let mut out = argv.clone();
    for (key, value) in &entries {
        if NOT_CONFIGURABLE.contains(&key.as_str()) {
            continue;
        }
        let known = sub
            .get_arguments()
            .any(|a| a.get_long() == Some(key.as_str()));
        if !known {
            return Err(Failure::Usage(format!(
                "config {}: unknown key {key:?} for `spa {sub_name}`",
                path.display()
            )));
        }
        if given.contains(key) || (key == "jobs" && jobs_from_env) {
            continue;
        }
        if let Some(v) = render(key, value)? {
            out.push(format!("--{key}").into());
            out.push(v.into());
        }
    }
    Ok(out)
}

/// Effective value of every configurable flag, keyed by long name, as raw
/// strings that `expand` accepts back.
pub fn echo(sub: &ArgMatches, sub_name: &str) -> BTreeMap<String, String> {
    let cli = Cli::command();
    let spec = cli.find_subcommand(sub_name).expect("parsed subcommand exists");
    let mut map = BTreeMap::new();
    for arg in spec.get_arguments() {
        let Some(long) = arg.get_long() else { continue };
        if NOT_CONFIGURABLE.contains(&long) {
            continue;
        }
        let Ok(Some(raw)) = sub.try_get_raw(arg.get_id().as_str()) else {
            continue;
        };
        let joined: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
        map.insert(long.to_owned(), joined.join(","));
    }
    map
}
