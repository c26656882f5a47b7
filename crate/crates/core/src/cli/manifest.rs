//! Run manifests. Each command records its fully resolved invocation, the
//! hashes of every input it read and the files it wrote; `replay` feeds the
//! recorded invocation back through the same code path.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Command;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub argv: Vec<String>,
    /// Resolved invocation; replaying runs exactly this.
    pub command: Command,
    /// Training and protocol settings the command derived from its flags.
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<InputHash>,
    pub inputs: Vec<InputHash>,
    pub seeds: Vec<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<PathBuf>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<InputHash> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(InputHash {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::invalid(format!("{}: not a run manifest: {e}", path.display())))
    }

    /// Fails when a recorded input changed since the run, naming the file.
    pub fn verify_inputs(&self) -> Result<()> {
        for rec in self.registry.iter().chain(&self.inputs) {
            let now = hash_file(&rec.path)?;
            if now.sha256 != rec.sha256 {
                return Err(Error::invalid(format!(
                    "{} changed since the recorded run (sha256 {} != {})",
                    rec.path.display(),
                    now.sha256,
                    rec.sha256
                )));
            }
        }
        Ok(())
    }
}
