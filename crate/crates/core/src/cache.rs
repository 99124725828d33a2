//! Content-addressed response cache: one JSON file per key plus an
//! append-only `index.jsonl`.

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::StanceLabel;

const INDEX_FILE: &str = "index.jsonl";
const USAGE_FILE: &str = "usage.json";

/// SHA-256 over length-prefixed fields, hex encoded. Length prefixes keep
/// `("ab","c")` and `("a","bc")` apart.
pub fn digest_fields(fields: &[&str]) -> String {
    let mut h = Sha256::new();
    for f in fields {
        h.update((f.len() as u64).to_le_bytes());
        h.update(f.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub namespace: String,
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<StanceLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub created_at: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexLine {
    key: String,
    namespace: String,
    created_at: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheUsage {
    pub hits: u64,
    pub misses: u64,
}

impl CacheUsage {
    pub fn hit_rate(&self) -> Option<f64> {
        let total = self.hits + self.misses;
        (total > 0).then(|| self.hits as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
    pub usage: CacheUsage,
}

/// Disk cache shared by agents and the article-level LLM client.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
    index_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache {
            dir,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            index_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Looks up `key`, counting a hit or a miss. Unreadable entries count as
    /// misses.
    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let found = fs::read_to_string(self.entry_path(key))
            .ok()
            .and_then(|s| serde_json::from_str::<CacheEntry>(&s).ok())
            .filter(|e| e.key == key);
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    /// Writes the entry to a temp file and renames it into place, then appends
    /// to the index.
    pub fn put(&self, entry: &CacheEntry) -> std::io::Result<()> {
        let path = self.entry_path(&entry.key);
        let tmp = self.dir.join(format!(
            ".{}.{}.tmp",
            entry.key,
            std::process::id() as u64 ^ thread_tag()
        ));
        fs::write(&tmp, serde_json::to_vec_pretty(entry).expect("cache entry serializes"))?;
        fs::rename(&tmp, &path)?;
        let line = serde_json::to_string(&IndexLine {
            key: entry.key.clone(),
            namespace: entry.namespace.clone(),
            created_at: entry.created_at.clone(),
        })
        .expect("index line serializes");
        let _guard = self.index_lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut index = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join(INDEX_FILE))?;
        writeln!(index, "{line}")
    }

    /// Hits and misses seen by this handle.
    pub fn session_usage(&self) -> CacheUsage {
        CacheUsage {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    /// Adds this handle's counters to the persisted usage totals.
    pub fn persist_usage(&self) -> std::io::Result<CacheUsage> {
        let _guard = self.index_lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut usage = read_usage(&self.dir);
        let session = self.session_usage();
        usage.hits += session.hits;
        usage.misses += session.misses;
        fs::write(self.dir.join(USAGE_FILE), serde_json::to_vec(&usage).expect("usage serializes"))?;
        self.hits.fetch_sub(session.hits, Ordering::Relaxed);
        self.misses.fetch_sub(session.misses, Ordering::Relaxed);
        Ok(usage)
    }

    /// Keys of all entries, sorted.
    pub fn keys(&self) -> std::io::Result<Vec<String>> {
        list_keys(&self.dir)
    }
}

fn thread_tag() -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    std::thread::current().id().hash(&mut h);
    h.finish()
}

fn read_usage(dir: &Path) -> CacheUsage {
    fs::read_to_string(dir.join(USAGE_FILE))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok())
        .unwrap_or_default()
}

fn list_keys(dir: &Path) -> std::io::Result<Vec<String>> {
    let mut keys = BTreeSet::new();
    if !dir.exists() {
        return Ok(vec![]);
    }
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(key) = name.strip_suffix(".json") {
            if !name.starts_with('.') && key.len() == 64 && key.bytes().all(|b| b.is_ascii_hexdigit()) {
                keys.insert(key.to_string());
            }
        }
    }
    Ok(keys.into_iter().collect())
}

/// Entry count, total entry bytes and persisted hit/miss totals for a cache
/// directory. A missing directory is an empty cache.
pub fn cache_stats(dir: &Path) -> std::io::Result<CacheStats> {
    let keys = list_keys(dir)?;
    let mut bytes = 0;
    for k in &keys {
        bytes += fs::metadata(dir.join(format!("{k}.json")))?.len();
    }
    Ok(CacheStats {
        entries: keys.len(),
        bytes,
        usage: read_usage(dir),
    })
}

/// Index lines of a cache directory, in append order.
pub fn cache_index(dir: &Path) -> std::io::Result<Vec<(String, String, String)>> {
    let path = dir.join(INDEX_FILE);
    if !path.exists() {
        return Ok(vec![]);
    }
    let mut out = Vec::new();
    for line in BufReader::new(fs::File::open(path)?).lines() {
        if let Ok(l) = serde_json::from_str::<IndexLine>(&line?) {
            out.push((l.key, l.namespace, l.created_at));
        }
    }
    Ok(out)
}

/// Removes every entry, the index and the usage totals. Returns the number of
/// entries removed.
pub fn clear_cache(dir: &Path) -> std::io::Result<usize> {
    let keys = list_keys(dir)?;
    for k in &keys {
        fs::remove_file(dir.join(format!("{k}.json")))?;
    }
    for f in [INDEX_FILE, USAGE_FILE] {
        let p = dir.join(f);
        if p.exists() {
            fs::remove_file(p)?;
        }
    }
    Ok(keys.len())
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
