use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use flim_core::io::{read_text, sha256_hex, write_file};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::{CliError, CliResult};

pub const MANIFEST_SUFFIX: &str = ".manifest.toml";

fn to_table(v: &impl Serialize, what: &str) -> CliResult<Table> {
    match Value::try_from(v) {
        Ok(Value::Table(t)) => Ok(t),
        Ok(_) => Err(CliError::Usage(format!("{what} is not a table"))),
        Err(e) => Err(CliError::Usage(format!("{what}: {e}"))),
    }
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Defaults, then the config file, then the flags that were given.
pub fn effective<C>(file: Option<&Path>, flags: &impl Serialize) -> CliResult<C>
where
    C: Serialize + DeserializeOwned + Default,
{
    let mut table = to_table(&C::default(), "defaults")?;
    if let Some(path) = file {
        let text = read_text(path)?;
        let t: Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        merge(&mut table, t);
    }
    merge(&mut table, to_table(flags, "flags")?);
    C::deserialize(Value::Table(table)).map_err(|e| CliError::Usage(format!("configuration: {e}")))
}

pub fn required<'a, T>(v: &'a Option<T>, key: &str) -> CliResult<&'a T> {
    v.as_ref()
        .ok_or_else(|| CliError::Usage(format!("missing `{key}` (flag or config key)")))
}

/// Provenance record written next to each run's primary output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub tool_version: String,
    pub config: Table,
    /// Input path to SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(subcommand: &str, config: &impl Serialize) -> CliResult<Self> {
        Ok(Manifest {
            subcommand: subcommand.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: to_table(config, "config")?,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs
            .insert(path.display().to_string(), sha256_hex(bytes));
    }

    /// Writes `bytes` to `path` and records its hash.
    pub fn output(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        write_file(path, bytes)?;
        self.record(path, bytes);
        Ok(())
    }

    pub fn record(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs
            .insert(path.display().to_string(), sha256_hex(bytes));
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = toml::to_string(self).map_err(|e| CliError::Usage(format!("manifest: {e}")))?;
        write_file(path, text.as_bytes())?;
        Ok(())
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(MANIFEST_SUFFIX);
    PathBuf::from(s)
}

/// `out` with `suffix` appended to the file name.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
