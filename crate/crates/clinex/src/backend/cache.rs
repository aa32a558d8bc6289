//! Content-addressed completion cache backed by an append-only JSONL log.
//! Partial runs resume through cache hits rather than bookkeeping.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

const CACHE_FILE: &str = "completions.jsonl";

/// Cache entries are keyed by prompt fingerprint, model id, and generation
/// config digest, so no completion can leak across configs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub fingerprint: String,
    pub model_id: String,
    pub config_digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    model_id: String,
    config_digest: String,
    completion: String,
}

pub struct CompletionCache {
    entries: HashMap<(String, String, String), String>,
    log: File,
    path: PathBuf,
}

impl CompletionCache {
    /// Opens (creating if needed) the cache log under `dir` and loads all
    /// existing entries. The first occurrence of a key wins, so a hit always
    /// returns byte-identical text to the original completion.
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(CACHE_FILE);
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                // tolerate a torn trailing line from a crashed run
                if let Ok(entry) = serde_json::from_str::<CacheEntry>(&line) {
                    entries
                        .entry((entry.key, entry.model_id, entry.config_digest))
                        .or_insert(entry.completion);
                }
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(CompletionCache { entries, log, path })
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        self.entries
            .get(&(
                key.fingerprint.clone(),
                key.model_id.clone(),
                key.config_digest.clone(),
            ))
            .cloned()
    }

    /// Stores a completion unless the key is already present, appending to
    /// the on-disk log.
    pub fn insert(&mut self, key: &CacheKey, completion: &str) -> std::io::Result<()> {
        let map_key = (
            key.fingerprint.clone(),
            key.model_id.clone(),
            key.config_digest.clone(),
        );
        if self.entries.contains_key(&map_key) {
            return Ok(());
        }
        let entry = CacheEntry {
            key: key.fingerprint.clone(),
            model_id: key.model_id.clone(),
            config_digest: key.config_digest.clone(),
            completion: completion.to_string(),
        };
        let line = serde_json::to_string(&entry).expect("cache entry serializes");
        writeln!(self.log, "{line}")?;
        self.log.flush()?;
        self.entries.insert(map_key, completion.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
