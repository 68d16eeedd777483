//! Run manifests: the merged settings of a run plus digests of every file it wrote.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub command: String,
    pub code_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// Fully merged settings (defaults, config file, flags).
    pub settings: serde_json::Value,
    pub instance_seed: Option<u64>,
    pub thermal_seed: Option<u64>,
    pub outputs: Vec<OutputDigest>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Command-specific diagnostics.
    #[serde(default)]
    pub report: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, settings: serde_json::Value) -> Self {
        RunManifest {
            schema: MANIFEST_SCHEMA,
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            settings,
            instance_seed: None,
            thermal_seed: None,
            outputs: Vec::new(),
            warnings: Vec::new(),
            report: serde_json::Value::Null,
        }
    }

    /// Records `file` (inside `dir`) with its digest.
    pub fn record(&mut self, dir: &Path, file: &Path) -> Result<()> {
        let rel = file.strip_prefix(dir).unwrap_or(file);
        let (sha256, bytes) = digest_file(file)?;
        self.outputs.push(OutputDigest {
            path: rel.to_string_lossy().into_owned(),
            sha256,
            bytes,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        crate::format::write_json(&path, self)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }

    /// Files whose current digest differs from the recorded one.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for o in &self.outputs {
            let (d, _) = digest_file(&dir.join(&o.path))?;
            if d != o.sha256 {
                bad.push(o.path.clone());
            }
        }
        Ok(bad)
    }
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<(String, u64)> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let k = f.read(&mut buf)?;
        if k == 0 {
            break;
        }
        total += k as u64;
        h.update(&buf[..k]);
    }
    Ok((hex::encode(h.finalize()), total))
}
