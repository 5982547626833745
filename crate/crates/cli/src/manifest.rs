use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fusim_core::unlearn::Method;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub comparable_hash: String,
    pub code_version: String,
    pub created_unix: u64,
    pub seed: u64,
    #[serde(default)]
    pub method: Option<Method>,
    pub artifacts: Vec<Artifact>,
    /// Manifests this run consumed.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    Ok(hex(&Sha256::digest(fs::read(path)?)))
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, comparable_hash: String, seed: u64) -> Self {
        Self {
            command: command.into(),
            config_hash,
            comparable_hash,
            code_version: env!("CARGO_PKG_VERSION").into(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            seed,
            method: None,
            artifacts: Vec::new(),
            inputs: Vec::new(),
        }
    }

    /// Hash-stamps every file in `files`, which must lie under `dir`.
    pub fn stamp(&mut self, dir: &Path, files: impl IntoIterator<Item = PathBuf>) -> CliResult<()> {
        for f in files {
            let rel = f.strip_prefix(dir).unwrap_or(&f).to_string_lossy().replace('\\', "/");
            let meta = fs::metadata(&f)?;
            self.artifacts.push(Artifact { path: rel, sha256: sha256_file(&f)?, bytes: meta.len() });
        }
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::MissingInput(format!("cannot read manifest {}: {e}", path.display())))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// True when every listed artifact exists with its recorded hash.
    pub fn verify(&self, dir: &Path) -> bool {
        self.artifacts.iter().all(|a| sha256_file(&dir.join(&a.path)).is_ok_and(|h| h == a.sha256))
    }

    pub fn artifact_path(&self, dir: &Path, name: &str) -> CliResult<PathBuf> {
        self.artifacts
            .iter()
            .find(|a| a.path == name)
            .map(|a| dir.join(&a.path))
            .ok_or_else(|| CliError::MissingInput(format!("manifest in {} lists no {name}", dir.display())))
    }
}
