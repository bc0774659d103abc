use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CacheEntry, LlmError};

/// Version tag written into every cache line.
pub const CACHE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Line {
    v: u32,
    #[serde(flatten)]
    entry: CacheEntry,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> LlmError {
    LlmError::Cache(format!("{}: {e}", path.display()))
}

/// Append-only JSON-lines cache with an in-memory index.
#[derive(Debug, Default)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    index: HashMap<String, CacheEntry>,
    order: Vec<String>,
}

fn read_lines(path: &Path) -> Result<Vec<CacheEntry>, LlmError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path, e)),
    };
    let mut out = Vec::new();
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| io_err(path, e))?;
    let last = lines.len();
    for (i, line) in lines.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&line) {
            Ok(l) if l.v == CACHE_FORMAT_VERSION => out.push(l.entry),
            Ok(l) => {
                return Err(io_err(path, format!("line {}: unsupported version {}", i + 1, l.v)))
            }
            // A crashed writer can leave a torn final line; skip it.
            Err(e) if i + 1 == last => {
                log::warn!("{}: ignoring torn final line: {e}", path.display())
            }
            Err(e) => return Err(io_err(path, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or lazily creates) the cache at `path` and indexes it.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let path = path.into();
        let mut cache = ResponseCache {
            path: Some(path.clone()),
            ..Default::default()
        };
        for entry in read_lines(&path)? {
            cache.index_entry(entry);
        }
        Ok(cache)
    }

    fn index_entry(&mut self, entry: CacheEntry) -> bool {
        if self.index.contains_key(&entry.key) {
            return false;
        }
        self.order.push(entry.key.clone());
        self.index.insert(entry.key.clone(), entry);
        true
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<&CacheEntry> {
        self.index.get(key)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &CacheEntry> {
        self.order.iter().map(|k| &self.index[k])
    }

    /// Adds an entry unless its key is already present, appending it to the
    /// backing file under an exclusive lock.
    pub fn insert(&mut self, entry: CacheEntry) -> Result<bool, LlmError> {
        if self.index.contains_key(&entry.key) {
            return Ok(false);
        }
        if let Some(path) = &self.path {
            let mut line = serde_json::to_string(&Line {
                v: CACHE_FORMAT_VERSION,
                entry: entry.clone(),
            })
            .map_err(|e| io_err(path, e))?;
            line.push('\n');
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| io_err(path, e))?;
            file.lock().map_err(|e| io_err(path, e))?;
            let written = file.write_all(line.as_bytes()).and_then(|_| file.flush());
            let _ = file.unlock();
            written.map_err(|e| io_err(path, e))?;
        }
        Ok(self.index_entry(entry))
    }

    pub fn stats(&self) -> CacheStats {
        let bytes = self
            .path
            .as_ref()
            .and_then(|p| std::fs::metadata(p).ok())
            .map_or(0, |m| m.len());
        let with_logprobs = self
            .index
            .values()
            .filter(|e| !e.response.first_token_logprobs.is_empty())
            .count();
        let oldest = self.index.values().map(|e| e.created_at).min();
        let newest = self.index.values().map(|e| e.created_at).max();
        CacheStats {
            entries: self.index.len(),
            with_logprobs,
            bytes,
            oldest,
            newest,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub with_logprobs: usize,
    pub bytes: u64,
    pub oldest: Option<u64>,
    pub newest: Option<u64>,
}

/// Merges caches into `output`, keeping the first entry seen for each key.
/// Returns the number of entries written.
pub fn merge_caches(inputs: &[PathBuf], output: &Path) -> Result<usize, LlmError> {
    let mut merged = ResponseCache::default();
    for p in inputs {
        for entry in read_lines(p)? {
            merged.index_entry(entry);
        }
    }
    let tmp = output.with_extension("merge.tmp");
    {
        let file = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        let mut w = BufWriter::new(file);
        for entry in merged.entries() {
            serde_json::to_writer(
                &mut w,
                &Line {
                    v: CACHE_FORMAT_VERSION,
                    entry: entry.clone(),
                },
            )
            .map_err(|e| io_err(&tmp, e))?;
            w.write_all(b"\n").map_err(|e| io_err(&tmp, e))?;
        }
        w.flush().map_err(|e| io_err(&tmp, e))?;
    }
    std::fs::rename(&tmp, output).map_err(|e| io_err(output, e))?;
    Ok(merged.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_client::CompletionResponse;

    fn entry(key: &str, text: &str) -> CacheEntry {
        CacheEntry {
            key: key.into(),
            response: CompletionResponse {
                text: text.into(),
                ..Default::default()
            },
            created_at: 1,
        }
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let mut c = ResponseCache::open(&path).unwrap();
        assert!(c.insert(entry("a", "x")).unwrap());
        assert!(!c.insert(entry("a", "y")).unwrap());
        let reloaded = ResponseCache::open(&path).unwrap();
        assert_eq!(reloaded.len(), 1);
        assert_eq!(reloaded.get("a").unwrap().response.text, "x");
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn torn_tail_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let mut c = ResponseCache::open(&path).unwrap();
        c.insert(entry("a", "x")).unwrap();
        std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .unwrap()
            .write_all(b"{\"v\":1,\"key\":\"b\"")
            .unwrap();
        assert_eq!(ResponseCache::open(&path).unwrap().len(), 1);
    }

    #[test]
    fn merge_dedups() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        let mut ca = ResponseCache::open(&a).unwrap();
        ca.insert(entry("k1", "x")).unwrap();
        ca.insert(entry("k2", "y")).unwrap();
        let mut cb = ResponseCache::open(&b).unwrap();
        cb.insert(entry("k2", "z")).unwrap();
        cb.insert(entry("k3", "w")).unwrap();
        let out = dir.path().join("out.jsonl");
        assert_eq!(merge_caches(&[a, b], &out).unwrap(), 3);
        let merged = ResponseCache::open(&out).unwrap();
        assert_eq!(merged.get("k2").unwrap().response.text, "y");
    }
}
