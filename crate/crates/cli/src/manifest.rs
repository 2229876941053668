//! Per-stage artifact manifests and the workdir lock.
//!
//! A manifest records the effective config, its hash, the master seed, and
//! content hashes of every input and output file, which is enough to
//! reproduce the artifact. Manifests carry no timestamps so identical runs
//! produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub stage: String,
    pub tool: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::data(format!("cannot hash {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_string(&config.canonical_json()).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    format!("{:x}", hasher.finalize())
}

/// Hash a directory by hashing its files in sorted order.
fn sha256_tree(path: &Path) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    let mut entries: Vec<PathBuf> =
        fs::read_dir(path)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for entry in entries {
        if entry.is_file() {
            hasher.update(entry.file_name().unwrap().to_string_lossy().as_bytes());
            hasher.update(fs::read(&entry)?);
        }
    }
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn write_manifest(
    workdir: &Path,
    stage: &str,
    config: &RunConfig,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<(), CliError> {
    let hash_entry = |path: &Path| -> Result<(String, String), CliError> {
        let name = path
            .strip_prefix(workdir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        let hash = if path.is_dir() { sha256_tree(path)? } else { sha256_file(path)? };
        Ok((name, hash))
    };
    let manifest = Manifest {
        stage: stage.to_string(),
        tool: format!("lane-intent {}", env!("CARGO_PKG_VERSION")),
        seed: config.seed,
        config_hash: config_hash(config),
        config: config.canonical_json(),
        inputs: inputs.iter().map(|p| hash_entry(p)).collect::<Result<_, _>>()?,
        outputs: outputs.iter().map(|p| hash_entry(p)).collect::<Result<_, _>>()?,
    };
    let dir = workdir.join("manifests");
    fs::create_dir_all(&dir)?;
    let body = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| CliError::data(format!("manifest encode: {e}")))?;
    fs::write(dir.join(format!("{stage}.json")), body)?;
    Ok(())
}

/// Exclusive workdir lock, released on drop.
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(workdir: &Path) -> Result<WorkdirLock, CliError> {
        fs::create_dir_all(workdir)?;
        let path = workdir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(WorkdirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::config(format!(
                "workdir {} is locked by another run (remove {} if stale)",
                workdir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
