//! Run manifests: provenance for every CLI invocation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance record emitted once per CLI run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Digest of the resolved configuration (stable across platforms).
    pub config_hash: String,
    pub seed: u64,
    /// Digest of every input artifact, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// Paths of produced artifacts.
    pub outputs: Vec<String>,
    /// Digest of every produced artifact; lets downstream manifests be
    /// checked against upstream ones.
    pub artifacts: BTreeMap<String, String>,
    /// Wall-clock per stage, milliseconds.
    pub timing_ms: BTreeMap<String, u64>,
    /// Oracle usage, when the command queried one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ledger: Option<LedgerSummary>,
    /// Records skipped while reading lenient inputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped_records: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LedgerSummary {
    pub total_calls: u64,
    pub unique_chunks: u64,
    pub failures: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: u64) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            config_hash: hash_config(config)?,
            seed,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            artifacts: BTreeMap::new(),
            timing_ms: BTreeMap::new(),
            ledger: None,
            skipped_records: None,
        })
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), hash_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
        if path.exists() {
            if let Ok(digest) = hash_file(path) {
                self.artifacts.insert(path.display().to_string(), digest);
            }
        }
    }

    pub fn record_timing(&mut self, stage: &str, elapsed: std::time::Duration) {
        self.timing_ms
            .insert(stage.to_string(), elapsed.as_millis() as u64);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// sha256 of the canonical JSON form of a config.
pub fn hash_config(config: &impl Serialize) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    Ok(format!("sha256:{}", hex::encode(Sha256::digest(&json))))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(format!("sha256:{}", hex::encode(Sha256::digest(&bytes))))
}

/// Default manifest location: alongside the primary output.
pub fn default_manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "run".into());
    name.push_str(".manifest.json");
    primary_output.with_file_name(name)
}
