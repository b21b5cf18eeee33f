//! Flag/config merging, metadata sidecars and atomic output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Overlays non-null flag values on the `--config` JSON object and
/// deserializes the result. Config keys must name a flag of the command.
/// A metadata sidecar is accepted as config; its `parameters` are used.
pub fn resolve<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T, CliError> {
    let Value::Object(flags) = serde_json::to_value(flags).map_err(|e| CliError::Config(e.to_string()))? else {
        unreachable!("argument structs serialize to objects")
    };
    let mut merged = match config {
        None => Map::new(),
        Some(path) => {
            let text = read(path)?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let value = match value {
                Value::Object(mut m) if m.get("tool").and_then(Value::as_str) == Some(TOOL) => {
                    m.remove("parameters").unwrap_or(Value::Object(Map::new()))
                }
                v => v,
            };
            let Value::Object(m) = value else {
                return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
            };
            m
        }
    };
    if let Some(key) = merged.keys().find(|k| !flags.contains_key(*k) || *k == "config") {
        return Err(CliError::Config(format!("unknown key `{key}`")));
    }
    for (k, v) in flags {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(e.to_string()))
}

pub const TOOL: &str = "mycoelec";

#[derive(Serialize)]
pub struct Sidecar<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: Option<u64>,
    pub parameters: Value,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

impl<'a> Sidecar<'a> {
    pub fn new(command: &'a str, seed: Option<u64>, parameters: Value) -> Self {
        Self {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            parameters,
            summary: Value::Null,
        }
    }
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Writes `out` and its sidecar.
pub fn emit(out: &Path, contents: &[u8], sidecar: &Sidecar) -> Result<(), CliError> {
    let meta = serde_json::to_vec_pretty(sidecar).map_err(|e| CliError::Config(e.to_string()))?;
    write_atomic(out, contents)?;
    write_atomic(&sidecar_path(out), &meta)
}

pub fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}
