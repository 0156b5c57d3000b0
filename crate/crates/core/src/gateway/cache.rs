//! Content-addressed response cache.
//!
//! The directory store keeps one file per validated reply under
//! `<root>/<first two hex digits>/<key>.json`, published by write-then-rename
//! so concurrent writers never expose a partial file.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub detector_id: String,
    pub op: String,
    pub sample_id: String,
    pub payload_hash: String,
}

impl CacheKey {
    pub fn new(detector_id: &str, op: &str, sample_id: &str, payload: &str) -> Self {
        CacheKey {
            detector_id: detector_id.to_string(),
            op: op.to_string(),
            sample_id: sample_id.to_string(),
            payload_hash: hex::encode(Sha256::digest(payload.as_bytes())),
        }
    }

    /// Hex digest naming the entry on disk.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.detector_id, &self.op, &self.sample_id, &self.payload_hash] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub enum ResponseCache {
    Disabled,
    Memory(Mutex<HashMap<String, String>>),
    Directory(PathBuf),
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResponseCache {
    pub fn memory() -> Self {
        ResponseCache::Memory(Mutex::new(HashMap::new()))
    }

    pub fn directory(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(ResponseCache::Directory(root))
    }

    fn entry_path(root: &Path, digest: &str) -> PathBuf {
        root.join(&digest[..2]).join(format!("{digest}.json"))
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        match self {
            ResponseCache::Disabled => None,
            ResponseCache::Memory(map) => map.lock().unwrap_or_else(|e| e.into_inner()).get(&key.digest()).cloned(),
            ResponseCache::Directory(root) => fs::read_to_string(Self::entry_path(root, &key.digest())).ok(),
        }
    }

    pub fn put(&self, key: &CacheKey, reply: &str) -> io::Result<()> {
        match self {
            ResponseCache::Disabled => Ok(()),
            ResponseCache::Memory(map) => {
                map.lock().unwrap_or_else(|e| e.into_inner()).insert(key.digest(), reply.to_string());
                Ok(())
            }
            ResponseCache::Directory(root) => {
                let digest = key.digest();
                let path = Self::entry_path(root, &digest);
                let dir = path.parent().expect("entry path has a parent");
                fs::create_dir_all(dir)?;
                let tmp = dir.join(format!(
                    ".{digest}.{}.{}.tmp",
                    std::process::id(),
                    TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
                ));
                {
                    let mut f = fs::File::create(&tmp)?;
                    f.write_all(reply.as_bytes())?;
                    f.sync_all()?;
                }
                fs::rename(&tmp, &path)
            }
        }
    }
}
