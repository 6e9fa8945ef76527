//! Resolution of command parameters: flags, then `HSLE_SEED` (seed only),
//! then the JSON config file, then defaults.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::Global;

/// Bad flag, config or combination; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

/// Fully resolved parameters of one run.
#[derive(Debug, Clone)]
pub struct Resolved<P> {
    pub command: &'static str,
    pub seed: u64,
    pub out: PathBuf,
    pub params: P,
}

pub const DEFAULT_OUT: &str = "hsle-out";
pub const SEED_VAR: &str = "HSLE_SEED";

fn read_config(path: &Path) -> anyhow::Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m
            .into_iter()
            .map(|(k, v)| (k.replace('-', "_"), v))
            .collect()),
        Ok(_) => usage(format!("config {} is not a JSON object", path.display())),
        Err(e) => usage(format!("config {}: {e}", path.display())),
    }
}

/// Overlays the set flags on the config file and the defaults of `P`.
pub fn resolve<F, P>(command: &'static str, global: &Global, flags: &F) -> anyhow::Result<Resolved<P>>
where
    F: Serialize,
    P: Serialize + DeserializeOwned + Default,
{
    let mut merged = match serde_json::to_value(P::default())? {
        Value::Object(m) => m,
        _ => unreachable!("parameter structs serialize to objects"),
    };
    let mut file = match &global.config {
        Some(p) => read_config(p)?,
        None => Map::new(),
    };
    let file_seed = file.remove("seed");
    let file_out = file.remove("out");
    file.remove("command");
    for (k, v) in file {
        if !merged.contains_key(&k) {
            return usage(format!("unknown config key {k:?} for {command}"));
        }
        merged.insert(k, v);
    }
    if let Value::Object(set) = serde_json::to_value(flags)? {
        merged.extend(set);
    }
    let params: P = serde_json::from_value(Value::Object(merged)).map_err(|e| UsageError(format!("{command}: {e}")))?;

    let env_seed = match std::env::var(SEED_VAR) {
        Ok(s) => Some(s.trim().parse::<u64>().map_err(|_| UsageError(format!("{SEED_VAR}={s:?} is not a u64")))?),
        Err(_) => None,
    };
    let file_seed = match file_seed {
        Some(v) => Some(v.as_u64().ok_or_else(|| UsageError(format!("config seed {v} is not a u64")))?),
        None => None,
    };
    let seed = global.seed.or(env_seed).or(file_seed).unwrap_or(0);
    let out = match (&global.out, file_out) {
        (Some(p), _) => p.clone(),
        (None, Some(Value::String(s))) => PathBuf::from(s),
        (None, Some(v)) => return usage(format!("config out {v} is not a path")),
        (None, None) => PathBuf::from(DEFAULT_OUT),
    };
    Ok(Resolved {
        command,
        seed,
        out,
        params,
    })
}
