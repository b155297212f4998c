//! Run manifests: what ran, on which inputs, with which settings.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use geogrowth::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonCount {
    pub horizon: i32,
    pub nobs: usize,
    pub n_countries: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub core_version: String,
    pub parallel: bool,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub samples: Vec<HorizonCount>,
    pub notes: serde_json::Map<String, serde_json::Value>,
    /// Seconds since the Unix epoch. Always the last line before the closing brace.
    pub timestamp: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path, label: String) -> Result<FileDigest> {
    let bytes = fs::read(path)?;
    Ok(FileDigest { path: label, sha256: sha256_hex(&bytes) })
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl Manifest {
    /// Writes pretty JSON to `dir/manifest.json`. Output files are listed
    /// relative to `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("cannot serialize manifest: {e}")))?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

/// Drops the timestamp line, for comparing manifests across runs.
pub fn without_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}
