//! Run manifests: what a command was run with and what it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    /// sha256 of the compact JSON encoding of `config`
    pub config_hash: String,
    pub config: serde_json::Value,
    pub started: String,
    pub finished: String,
    pub artifacts: Vec<PathBuf>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(config: &serde_json::Value) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("JSON values always serialize"))
}

/// Path and content hash of an input file, for recording in a config.
pub fn file_digest(path: &Path) -> Result<serde_json::Value> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::json!({ "path": path, "sha256": sha256_hex(&bytes) }))
}

/// `out.ext` -> `out.ext.manifest.json`
pub fn beside(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

impl RunManifest {
    pub fn start(command: &str, seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv: std::env::args().collect(),
            seed,
            config_hash: config_hash(&config),
            config,
            started: now(),
            finished: String::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn add(&mut self, p: &Path) {
        self.artifacts.push(p.to_path_buf());
    }

    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.finished = now();
        for a in &self.artifacts {
            if !a.exists() {
                bail!("artifact {} was not written", a.display());
            }
        }
        fs::write(path, serde_json::to_string_pretty(&self)?).with_context(|| format!("writing {}", path.display()))?;
        let back: RunManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        if config_hash(&back.config) != back.config_hash {
            bail!("manifest config hash does not match its config");
        }
        Ok(())
    }
}
