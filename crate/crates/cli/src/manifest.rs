use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";

/// Record of one command invocation, written last and atomically into the
/// run directory. `inputs` and `config` are enough to replay the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Input directories and files, by role.
    pub inputs: BTreeMap<String, PathBuf>,
    pub config: RunConfig,
    /// Output files, by role, relative to the run directory.
    pub artifacts: BTreeMap<String, String>,
    /// Headline numbers. Accuracies are formatted to 4 decimals.
    pub results: BTreeMap<String, String>,
    #[serde(default)]
    pub infeasible: bool,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            started_unix: now(),
            finished_unix: 0,
            inputs: BTreeMap::new(),
            config: config.clone(),
            artifacts: BTreeMap::new(),
            results: BTreeMap::new(),
            infeasible: false,
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) {
        self.inputs.insert(role.into(), absolute(path));
    }

    pub fn input_path(&self, role: &str) -> Result<&Path> {
        self.inputs
            .get(role)
            .map(PathBuf::as_path)
            .ok_or_else(|| bitforge::Error::Schema(format!("manifest has no '{role}' input")).into())
    }

    pub fn artifact(&mut self, role: &str, file: &str) {
        self.artifacts.insert(role.into(), file.into());
    }

    pub fn accuracy(&mut self, key: &str, value: f64) {
        self.results.insert(key.into(), format!("{value:.4}"));
    }

    /// Stamps the end time and writes `manifest.json` via a rename.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished_unix = now();
        let text = serde_json::to_string_pretty(&self)?;
        write_atomic(&dir.join(MANIFEST), text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = if dir.is_dir() { dir.join(MANIFEST) } else { dir.to_path_buf() };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| bitforge::Error::Schema(format!("corrupt manifest {}: {e}", path.display())).into())
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}
