//! Artifact directory, manifest and CSV formatting.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Floats in artifacts.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f(*x)).collect::<Vec<_>>().join(" ")
}

/// Hex SHA-256 of the config text, the seed and the subcommand.
pub fn run_hash(config_text: &str, seed: u64, subcommand: &str) -> String {
    let mut h = Sha256::new();
    h.update(config_text.as_bytes());
    h.update([0]);
    h.update(seed.to_le_bytes());
    h.update(subcommand.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    /// Operation and parameters that produced the file.
    pub producer: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub module: String,
    pub invariant: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub version: &'static str,
    pub subcommand: String,
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

pub struct Artifacts {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Artifacts {
    pub fn create(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>, producer: impl Into<String>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let bytes = bytes.as_ref();
        std::fs::write(&path, bytes).map_err(CliError::io(&path))?;
        self.files.retain(|f| f.file != name);
        self.files.push(ManifestEntry {
            file: name.into(),
            sha256: hex::encode(Sha256::digest(bytes)),
            producer: producer.into(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(
        &mut self,
        name: &str,
        value: &T,
        producer: impl Into<String>,
    ) -> Result<(), CliError> {
        let s = serde_json::to_string_pretty(value).map_err(|e| CliError::compute("cli")(e.into()))?;
        self.write(name, s + "\n", producer)
    }

    pub fn finish(self, mut manifest: Manifest) -> Result<(PathBuf, Vec<ManifestEntry>), CliError> {
        manifest.files = self.files.clone();
        let path = self.dir.join(MANIFEST);
        let s = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::compute("cli")(e.into()))?;
        std::fs::write(&path, s + "\n").map_err(CliError::io(&path))?;
        Ok((self.dir, self.files))
    }
}
