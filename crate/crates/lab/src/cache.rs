//! Content-addressed store of finished grid points, so interrupted sweeps resume.
//!
//! The key of a point is the SHA-256 of the canonical JSON of its full
//! parameter tuple; the value is stored as `<dir>/<key>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::manifest::digest_bytes;

#[derive(Debug, Clone)]
pub struct GridCache {
    dir: Option<PathBuf>,
}

impl GridCache {
    pub fn at(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating cache dir {}", dir.display()))?;
        Ok(GridCache {
            dir: Some(dir.to_path_buf()),
        })
    }

    /// A cache that stores nothing.
    pub fn disabled() -> Self {
        GridCache { dir: None }
    }

    pub fn key(point: &impl Serialize) -> Result<String> {
        // serde_json orders struct fields by declaration, so equal tuples give equal bytes.
        Ok(digest_bytes(&serde_json::to_vec(point)?))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    pub fn get<T: DeserializeOwned>(&self, point: &impl Serialize) -> Result<Option<T>> {
        let Some(path) = self.path(&Self::key(point)?) else {
            return Ok(None);
        };
        match fs::read(&path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes).ok()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
        }
    }

    pub fn put<T: Serialize>(&self, point: &impl Serialize, value: &T) -> Result<()> {
        let Some(path) = self.path(&Self::key(point)?) else {
            return Ok(());
        };
        // Write then rename, so a killed run never leaves a truncated entry.
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec(value)?)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Cached value, or `compute` and store.
    pub fn get_or_compute<T, F>(&self, point: &impl Serialize, compute: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        if let Some(v) = self.get(point)? {
            return Ok(v);
        }
        let v = compute()?;
        self.put(point, &v)?;
        Ok(v)
    }
}
