//! Run manifests and config resolution.
//!
//! Every command resolves its effective config from three layers, later
//! layers winning key by key: the command's defaults, a config file, and
//! the command-line flags. A config file is TOML or JSON. In TOML, a table
//! named after the command (`[train]`) is used if present, the top level
//! otherwise. A JSON file may be a manifest, in which case its `config`
//! object is used.
//!
//! The manifest written next to each command's output is pretty-printed
//! JSON:
//!
//! ```json
//! {
//!   "tool": "regionclf",
//!   "version": "0.1.0",
//!   "command": "train",
//!   "config": { ... effective config ... },
//!   "seeds": { "seed": 0 },
//!   "inputs": { "runs/data/train.rcd": "<sha256>", ... },
//!   "outputs": { "runs/model.ckpt": "<sha256>", ... },
//!   "summary": { ... command-specific results ... }
//! }
//! ```
//!
//! Manifests hold no timestamps or host details, so two runs with the same
//! config and inputs write the same manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::fsutil;

pub const TOOL: &str = "regionclf";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

impl Manifest {
    /// A manifest for `config`, digesting `inputs` and `outputs` as they
    /// are on disk now.
    pub fn new<C: Serialize>(
        command: &str,
        config: &C,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        summary: Value,
    ) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(Manifest {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seeds: seeds_of(&config),
            config,
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
            summary,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fsutil::read(path)?;
        let m: Manifest = serde_json::from_slice(&bytes)
            .map_err(|e| Error::format(path, format!("not a run manifest: {e}")))?;
        if m.tool != TOOL {
            return Err(Error::format(
                path,
                format!("written by {:?}, not {TOOL}", m.tool),
            ));
        }
        Ok(m)
    }
}

fn digests(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), fsutil::file_digest(p)?)))
        .collect()
}

/// Every integer config entry whose key ends in `seed`.
fn seeds_of(config: &Value) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    if let Value::Object(map) = config {
        for (k, v) in map {
            if k.ends_with("seed") {
                if let Some(s) = v.as_u64() {
                    out.insert(k.clone(), s);
                }
            }
        }
    }
    out
}

/// Reads a config file as a JSON object for `command`.
pub fn load_config_file(path: &Path, command: &str) -> Result<Map<String, Value>> {
    let bytes = fsutil::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "config is not UTF-8"))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let value: Value = if is_json {
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?
    };
    let Value::Object(mut map) = value else {
        return Err(Error::format(path, "config must be a table of keys"));
    };
    if is_json && map.contains_key("tool") && map.contains_key("config") {
        let written_by = map
            .get("command")
            .and_then(Value::as_str)
            .unwrap_or_default();
        if written_by != command {
            return Err(Error::usage(format!(
                "{} is a manifest of `{written_by}`, not `{command}`",
                path.display()
            )));
        }
        return match map.remove("config") {
            Some(Value::Object(c)) => Ok(c),
            _ => Err(Error::format(path, "manifest config is not an object")),
        };
    }
    match map.remove(command) {
        Some(Value::Object(section)) => Ok(section),
        Some(_) => Err(Error::format(path, format!("[{command}] must be a table"))),
        None => Ok(map),
    }
}

/// Flag values as a JSON object, dropping unset ones (`None`, `false`,
/// empty lists).
pub fn flag_values<F: Serialize>(flags: &F) -> Result<Map<String, Value>> {
    let Value::Object(map) = serde_json::to_value(flags)? else {
        return Err(Error::Runtime(
            "flags did not serialize to an object".into(),
        ));
    };
    Ok(map
        .into_iter()
        .filter(|(_, v)| match v {
            Value::Null | Value::Bool(false) => false,
            Value::Array(a) => !a.is_empty(),
            _ => true,
        })
        .collect())
}

/// Defaults, overridden by the file, overridden by the flags.
pub fn resolve<C>(command: &str, file: Option<&Path>, flags: Map<String, Value>) -> Result<C>
where
    C: Serialize + DeserializeOwned + Default,
{
    let Value::Object(mut merged) = serde_json::to_value(C::default())? else {
        return Err(Error::Runtime(
            "defaults did not serialize to an object".into(),
        ));
    };
    if let Some(path) = file {
        merged.extend(load_config_file(path, command)?);
    }
    merged.extend(flags);
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| Error::usage(format!("{command} config: {e}")))
}

/// Default manifest location for a command whose main output is `output`.
pub fn default_path(output: &Path) -> PathBuf {
    if output.extension().is_none() && !output.is_file() {
        output.join("manifest.json")
    } else {
        let mut s = output.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}

/// Outputs whose digests differ from the manifest's (missing files count).
pub fn mismatched_outputs(manifest: &Manifest) -> Vec<String> {
    manifest
        .outputs
        .iter()
        .filter(|(path, digest)| {
            fsutil::file_digest(Path::new(path))
                .map(|d| &d != *digest)
                .unwrap_or(true)
        })
        .map(|(p, _)| p.clone())
        .collect()
}

/// Inputs that changed since the manifest was written.
pub fn changed_inputs(manifest: &Manifest) -> Vec<String> {
    manifest
        .inputs
        .iter()
        .filter(|(path, digest)| {
            fsutil::file_digest(Path::new(path))
                .map(|d| &d != *digest)
                .unwrap_or(true)
        })
        .map(|(p, _)| p.clone())
        .collect()
}
