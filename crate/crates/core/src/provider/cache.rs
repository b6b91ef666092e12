//! Content-addressed on-disk response cache.
//!
//! One JSON file per cache key under a flat directory. Writes go through
//! a temp file followed by an atomic rename, so concurrent workers can
//! share a cache directory; a corrupted entry degrades to a miss with a
//! warning rather than poisoning the run.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::provider::{CacheKey, ChatResponse};

static TEMP_SEQ: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.0))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<ChatResponse>> {
        let path = self.entry_path(key);
        let raw = match std::fs::read_to_string(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        match serde_json::from_str::<ChatResponse>(&raw) {
            Ok(resp) => Ok(Some(resp)),
            Err(e) => {
                log::warn!("corrupted cache entry {} treated as miss: {e}", path.display());
                Ok(None)
            }
        }
    }

    pub fn put(&self, key: &CacheKey, response: &ChatResponse) -> Result<()> {
        let path = self.entry_path(key);
        let body = serde_json::to_string_pretty(response).expect("response serializes");
        let temp = self.dir.join(format!(
            ".{}.{}.{}.tmp",
            key.0,
            std::process::id(),
            TEMP_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&temp, body).map_err(|e| Error::io(&temp, e))?;
        std::fs::rename(&temp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}
